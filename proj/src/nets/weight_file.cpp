#include "nam/weight_file.hpp"

#include "../io/byte_stream.hpp"
#include "nam/errors.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

namespace nam {

namespace {
constexpr char kMagic[] = "NAMW";
}

std::vector<std::uint8_t> encode_weights(const NamedTensors& tensors) {
    detail::ByteWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u8(kWeightFileVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.empty() || name.size() > 0xFFFF) throw FormatError("weight name length out of range: '" + name + "'");
        if (t.rank() > 0xFF) throw FormatError("tensor rank too large for '" + name + "'");
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : t.data()) w.f32(v);
    }
    return w.take();
}

NamedTensors decode_weights(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "weight file");
    if (r.str(4) != std::string_view(kMagic, 4)) throw FormatError("weight file: bad magic");
    const auto version = r.u8();
    if (version != kWeightFileVersion) {
        throw FormatError("weight file: unsupported version " + std::to_string(version));
    }
    const auto count = r.u32();
    NamedTensors out;
    std::set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.u16();
        std::string name = r.str(len);
        if (name.empty()) throw FormatError("weight file: empty tensor name");
        if (!names.insert(name).second) throw FormatError("weight file: duplicate tensor '" + name + "'");
        const auto rank = r.u8();
        if (rank == 0) throw FormatError("weight file: tensor '" + name + "' has rank 0");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = r.u32();
            if (d == 0) throw FormatError("weight file: tensor '" + name + "' has a zero dimension");
            n *= d;
        }
        if (n > r.remaining() / 4) throw FormatError("weight file: truncated payload for '" + name + "'");
        std::vector<float> values(n);
        for (auto& v : values) v = r.f32();
        out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    if (r.remaining() != 0) throw FormatError("weight file: trailing bytes after last record");
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

void save_weights(const std::filesystem::path& path, const NamedTensors& tensors) {
    write_file_bytes(path, encode_weights(tensors));
}

NamedTensors load_weights(const std::filesystem::path& path) { return decode_weights(read_file_bytes(path)); }

const Tensor& find_tensor(const NamedTensors& tensors, const std::string& name) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
    if (it == tensors.end()) throw FormatError("missing tensor '" + name + "'");
    return it->second;
}

void assign_weights(const NamedTensors& target, const NamedTensors& source) {
    for (const auto& [name, t] : source) {
        auto it = std::find_if(target.begin(), target.end(), [&](const auto& p) { return p.first == name; });
        if (it == target.end()) throw FormatError("unknown tensor '" + name + "' for this architecture");
        if (it->second.shape() != t.shape()) {
            throw FormatError("tensor '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                              shape_str(it->second.shape()));
        }
    }
    for (const auto& [name, t] : target) find_tensor(source, name);
    for (const auto& [name, t] : target) {
        auto src = find_tensor(source, name).data();
        Tensor dst = t;
        std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
}

std::uint64_t weights_checksum(const NamedTensors& tensors) {
    std::uint64_t h = 14695981039346656037ULL;
    for (auto b : encode_weights(tensors)) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace nam
