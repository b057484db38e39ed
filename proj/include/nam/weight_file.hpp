#pragma once

#include "nam/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nam {

/// Ordered (name, tensor) list; order is preserved through save/load.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Weight container layout, all integers little-endian:
//   "NAMW" | u8 version (1) | u32 record count
//   per record: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 payload
inline constexpr std::uint8_t kWeightFileVersion = 1;

std::vector<std::uint8_t> encode_weights(const NamedTensors& tensors);
/// Parses a complete container. Throws FormatError on bad magic, unknown
/// version, truncation or trailing bytes; nothing is returned on failure.
NamedTensors decode_weights(std::span<const std::uint8_t> bytes);

void save_weights(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_weights(const std::filesystem::path& path);

/// Copies `source` values into the tensors of `target` by name. Every name
/// must be known to the target and every target tensor must be present,
/// with identical shapes. On error nothing is modified.
void assign_weights(const NamedTensors& target, const NamedTensors& source);

/// Looks up a tensor by name; throws FormatError when absent.
const Tensor& find_tensor(const NamedTensors& tensors, const std::string& name);

/// FNV-1a over the encoded container, used to assert that weights did not change.
std::uint64_t weights_checksum(const NamedTensors& tensors);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace nam
