#include "byte_stream.hpp"
#include "nam/errors.hpp"
#include "nam/io.hpp"
#include "nam/weight_file.hpp"

#include <cmath>
#include <limits>

namespace nam {

namespace {

constexpr char kMagic[] = "NAMD";
constexpr std::uint8_t kVersion = 1;

}  // namespace

Shape Dataset::image_shape() const {
    if (images.empty()) throw Error("dataset is empty");
    return images.front().shape();
}

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
    if (data.images.empty()) throw Error("cannot write an empty dataset");
    if (data.has_labels() && data.labels.size() != data.images.size()) {
        throw Error("dataset has " + std::to_string(data.labels.size()) + " labels for " +
                    std::to_string(data.images.size()) + " images");
    }
    const Shape shape = data.image_shape();
    if (shape.size() != 3) throw ShapeError("dataset images must be [C,H,W], got " + shape_str(shape));
    if (shape[0] > std::numeric_limits<std::uint8_t>::max() || shape[1] > std::numeric_limits<std::uint16_t>::max() ||
        shape[2] > std::numeric_limits<std::uint16_t>::max()) {
        throw ShapeError("dataset image shape " + shape_str(shape) + " does not fit the header");
    }
    if (data.images.size() > std::numeric_limits<std::uint32_t>::max()) throw Error("dataset too large");

    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u8(kVersion);
    w.u32(static_cast<std::uint32_t>(data.images.size()));
    w.u8(static_cast<std::uint8_t>(shape[0]));
    w.u16(static_cast<std::uint16_t>(shape[1]));
    w.u16(static_cast<std::uint16_t>(shape[2]));
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& img = data.images[i];
        if (img.shape() != shape) {
            throw ShapeError("dataset image " + std::to_string(i) + " has shape " + shape_str(img.shape()) +
                             ", expected " + shape_str(shape));
        }
        for (float v : img.data()) {
            if (!(v >= -1.0f && v <= 1.0f)) {
                throw Error("dataset image " + std::to_string(i) + " has a value outside [-1, 1]");
            }
            w.f32(v);
        }
    }
    for (auto l : data.labels) w.u32(l);
    return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "dataset");
    if (r.str(4) != kMagic) throw FormatError("not a dataset file (bad magic)");
    const auto version = r.u8();
    if (version != kVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    const std::size_t count = r.u32();
    const Shape shape = {r.u8(), r.u16(), r.u16()};
    if (count == 0 || shape_numel(shape) == 0) throw FormatError("dataset header describes no data");

    const std::size_t per = shape_numel(shape);
    if (r.remaining() / 4 / per < count) {
        throw FormatError("dataset payload truncated: header promises " + std::to_string(count) + " images of " +
                          shape_str(shape));
    }
    Dataset data;
    data.images.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<float> v(per);
        for (auto& x : v) {
            x = r.f32();
            if (!(x >= -1.0f && x <= 1.0f)) {
                throw FormatError("dataset image " + std::to_string(i) + " has a value outside [-1, 1]");
            }
        }
        data.images.push_back(Tensor::from(shape, std::move(v)));
    }
    if (r.remaining() == 0) return data;
    if (r.remaining() != 4 * count) {
        throw FormatError("dataset has " + std::to_string(r.remaining()) +
                          " trailing bytes; expected none or a label block of " + std::to_string(4 * count));
    }
    data.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) data.labels.push_back(r.u32());
    return data;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
    write_file_bytes(path, encode_dataset(data));
}

Dataset read_dataset(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_dataset(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace nam
