#include "nam/errors.hpp"
#include "nam/io.hpp"
#include "nam/weight_file.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace nam {

namespace {

class HeaderParser {
public:
    explicit HeaderParser(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t number() {
        skip_space_and_comments();
        std::size_t v = 0, digits = 0;
        while (pos_ < in_.size() && std::isdigit(in_[pos_])) {
            v = v * 10 + (in_[pos_++] - '0');
            if (++digits > 9) throw FormatError("image header: number too large");
        }
        if (digits == 0) throw FormatError("image header: expected a number at byte " + std::to_string(pos_));
        return v;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= in_.size() || !std::isspace(in_[pos_])) throw FormatError("image header: missing raster separator");
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < in_.size()) {
            if (std::isspace(in_[pos_])) {
                ++pos_;
            } else if (in_[pos_] == '#') {
                while (pos_ < in_.size() && in_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 2;
};

}  // namespace

std::uint8_t to_byte(float v) {
    const float p = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
    return static_cast<std::uint8_t>(p);
}

Tensor decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw FormatError("not a binary PGM/PPM file (expected P5 or P6)");
    }
    const std::size_t channels = bytes[1] == '6' ? 3 : 1;
    HeaderParser hp(bytes);
    const std::size_t w = hp.number(), h = hp.number(), maxval = hp.number();
    if (w == 0 || h == 0) throw FormatError("image header: zero width or height");
    if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    const std::size_t start = hp.raster_start();
    const std::size_t need = w * h * channels;
    if (bytes.size() - start < need) throw FormatError("image raster truncated");
    if (bytes.size() - start > need) throw FormatError("image has trailing data after the raster");

    std::vector<float> out(need);
    // Interleaved RGB -> planar [C,H,W].
    for (std::size_t p = 0; p < w * h; ++p)
        for (std::size_t c = 0; c < channels; ++c)
            out[c * w * h + p] = static_cast<float>(bytes[start + p * channels + c]) / 127.5f - 1.0f;
    return Tensor::from({channels, h, w}, std::move(out));
}

std::vector<std::uint8_t> encode_image(const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
        throw ShapeError("write_image: expected [1,H,W] or [3,H,W], got " + shape_str(image.shape()));
    }
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const std::string header = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " +
                               std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    auto x = image.data();
    out.reserve(out.size() + x.size());
    for (std::size_t p = 0; p < w * h; ++p)
        for (std::size_t k = 0; k < c; ++k) out.push_back(to_byte(x[k * w * h + p]));
    return out;
}

Tensor read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_image(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
    write_file_bytes(path, encode_image(image));
}

Tensor compose_grid(const std::vector<std::vector<Tensor>>& rows) {
    if (rows.empty()) throw Error("grid: no rows");
    std::size_t th = 0, tw = 0, cols = 0;
    for (const auto& r : rows) {
        cols = std::max(cols, r.size());
        for (const auto& t : r) {
            if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3)) {
                throw ShapeError("grid: tiles must be [1,H,W] or [3,H,W], got " + shape_str(t.shape()));
            }
            th = std::max(th, t.dim(1));
            tw = std::max(tw, t.dim(2));
        }
    }
    if (cols == 0) throw Error("grid: no tiles");
    constexpr std::size_t gap = 1;
    const std::size_t H = rows.size() * (th + gap) + gap, W = cols * (tw + gap) + gap;
    std::vector<float> canvas(3 * H * W, -1.0f);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < rows[r].size(); ++k) {
            const Tensor& t = rows[r][k];
            const std::size_t oy = gap + r * (th + gap), ox = gap + k * (tw + gap);
            const std::size_t h = t.dim(1), w = t.dim(2);
            auto x = t.data();
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t src_c = t.dim(0) == 3 ? c : 0;
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        canvas[(c * H + oy + i) * W + ox + j] = std::clamp(x[(src_c * h + i) * w + j], -1.0f, 1.0f);
            }
        }
    }
    return Tensor::from({3, H, W}, std::move(canvas));
}

void write_grid(const std::filesystem::path& path, const std::vector<std::vector<Tensor>>& rows) {
    write_image(path, compose_grid(rows));
}

}  // namespace nam
