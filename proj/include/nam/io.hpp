#pragma once

#include "nam/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nam {

/// Images of one shape with optional integer labels.
///
/// On disk ("NAMD"): magic, u8 version, u32 count, u8 channels, u16 height,
/// u16 width, count*c*h*w f32 values in [-1, 1], then optionally count u32
/// labels. All little-endian.
struct Dataset {
    std::vector<Tensor> images;
    std::vector<std::uint32_t> labels;  // empty or one per image

    bool has_labels() const { return !labels.empty(); }
    Shape image_shape() const;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// 8-bit binary PGM (P5, one channel) or PPM (P6, three channels). Pixel p
/// maps to p / 127.5 - 1.
Tensor decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_image(const Tensor& image);
Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& image);

/// Quantizes a value in [-1, 1] to [0, 255]; out-of-range values clamp.
std::uint8_t to_byte(float v);

/// Lays tiles out row by row on a black canvas with a one-pixel gutter and
/// writes a P6 file. Single-channel tiles are shown as gray.
void write_grid(const std::filesystem::path& path, const std::vector<std::vector<Tensor>>& rows);
/// The canvas write_grid would produce, as a [3, H, W] tensor.
Tensor compose_grid(const std::vector<std::vector<Tensor>>& rows);

}  // namespace nam
