#include "nam/errors.hpp"
#include "nam/synth.hpp"

#include <cmath>
#include <numbers>

namespace nam {

namespace {

float squash_slope(float t) { return 1.0f - t * t; }

std::size_t read_size(const Tensor& meta, std::size_t i) {
    if (i >= meta.numel()) throw FormatError("generator config record too short");
    const float v = meta.at(i);
    if (!(v >= 1.0f) || v != std::floor(v)) throw FormatError("generator config record is invalid");
    return static_cast<std::size_t>(v);
}

constexpr float kRadiusMin = 2.5f;
constexpr float kRadiusMax = 4.5f;
constexpr float kLevelMid = 0.2f;
constexpr float kLevelHalf = 0.2f;
constexpr float kLevelContrast = 0.6f;

}  // namespace

// ---------------------------------------------------------------------------
// BlobGenerator

BlobGenerator::BlobGenerator(BlobConfig cfg) : cfg_(cfg) {
    if (cfg_.size < 8) throw Error("BlobGenerator: size must be at least 8");
}

float BlobGenerator::center() const { return 0.5f * static_cast<float>(cfg_.size - 1); }
float BlobGenerator::center_span() const { return 0.5f * static_cast<float>(cfg_.size) - 4.0f; }

float BlobGenerator::encode_center(float pos) const {
    const float t = (pos - center()) / center_span();
    if (!(t > -1.0f && t < 1.0f)) throw Error("BlobGenerator: centre outside the reachable range");
    return std::atanh(t);
}

std::vector<float> BlobGenerator::decode(std::span<const float> z) const {
    if (z.size() != latent_dim()) throw ShapeError("BlobGenerator::decode: latent size mismatch");
    const float scale = static_cast<float>(cfg_.size) / 16.0f;
    const float lmin = std::log(kRadiusMin * scale), lmax = std::log(kRadiusMax * scale);
    std::vector<float> p = {center() + center_span() * std::tanh(z[0]), center() + center_span() * std::tanh(z[1]),
                            std::exp(0.5f * (lmin + lmax) + 0.5f * (lmax - lmin) * std::tanh(z[2]))};
    if (cfg_.with_level) p.push_back(kLevelMid + kLevelHalf * std::tanh(z[3]));
    return p;
}

std::vector<std::string> BlobGenerator::decoded_names() const {
    std::vector<std::string> n = {"cx", "cy", "radius"};
    if (cfg_.with_level) n.emplace_back("level");
    return n;
}

Tensor BlobGenerator::forward(const Tensor& z) const {
    check_latent(z);
    const auto zv = z.data();
    const float scale = static_cast<float>(cfg_.size) / 16.0f;
    const float lmin = std::log(kRadiusMin * scale), lmax = std::log(kRadiusMax * scale);
    const float lmid = 0.5f * (lmin + lmax), lhalf = 0.5f * (lmax - lmin);

    const float t0 = std::tanh(zv[0]), t1 = std::tanh(zv[1]), t2 = std::tanh(zv[2]);
    const float span = center_span();
    const float cx = center() + span * t0;
    const float cy = center() + span * t1;
    const float r = std::exp(lmid + lhalf * t2);
    const float r2 = r * r;
    const float t3 = cfg_.with_level ? std::tanh(zv[3]) : 0.0f;
    const float level = cfg_.with_level ? kLevelMid + kLevelHalf * t3 : 0.0f;
    const float contrast = cfg_.with_level ? kLevelContrast : 1.0f;

    const std::size_t n = cfg_.size;
    std::vector<float> disc(n * n), out(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const float dx = static_cast<float>(j) - cx, dy = static_cast<float>(i) - cy;
            const float v = std::exp(-(dx * dx + dy * dy) / r2);
            disc[i * n + j] = v;
            out[i * n + j] = 2.0f * (level + contrast * v) - 1.0f;
        }
    }

    const bool with_level = cfg_.with_level;
    // d cx/dz0, d cy/dz1, d r/dz2, d level/dz3
    const float dcx = span * squash_slope(t0), dcy = span * squash_slope(t1);
    const float dr = r * lhalf * squash_slope(t2);
    const float dlevel = kLevelHalf * squash_slope(t3);
    return custom_op("blob_render", {z}, {1, n, n}, std::move(out),
                     [=, disc = std::move(disc)](std::span<const float> g, std::span<std::span<float>> gin) {
                         double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                         for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t j = 0; j < n; ++j) {
                                 const float v = disc[i * n + j];
                                 const float gv = g[i * n + j] * 2.0f * contrast * v;
                                 const float dx = static_cast<float>(j) - cx, dy = static_cast<float>(i) - cy;
                                 a0 += gv * 2.0f * dx / r2;
                                 a1 += gv * 2.0f * dy / r2;
                                 a2 += gv * 2.0f * (dx * dx + dy * dy) / (r2 * r);
                                 a3 += 2.0f * g[i * n + j];
                             }
                         }
                         auto gz = gin[0];
                         gz[0] = static_cast<float>(a0 * dcx);
                         gz[1] = static_cast<float>(a1 * dcy);
                         gz[2] = static_cast<float>(a2 * dr);
                         if (with_level) gz[3] = static_cast<float>(a3 * dlevel);
                     });
}

NamedTensors BlobGenerator::parameters() const {
    return {{"generator.blob.config",
             Tensor::from({2}, {static_cast<float>(cfg_.size), cfg_.with_level ? 1.0f : 0.0f})}};
}

// ---------------------------------------------------------------------------
// OrientedBarGenerator

OrientedBarGenerator::OrientedBarGenerator(BarConfig cfg) : cfg_(cfg) {
    if (cfg_.size < 8) throw Error("OrientedBarGenerator: size must be at least 8");
}

namespace {
constexpr float kHalfWidthMid = 1.25f;
constexpr float kHalfWidthHalf = 0.75f;
constexpr float kCapSoftness = 0.5f;
}  // namespace

std::vector<float> OrientedBarGenerator::decode(std::span<const float> z) const {
    if (z.size() != 2) throw ShapeError("OrientedBarGenerator::decode: latent size mismatch");
    return {kMaxAngleDeg * std::tanh(z[0]), kHalfWidthMid + kHalfWidthHalf * std::tanh(z[1])};
}

std::vector<std::string> OrientedBarGenerator::decoded_names() const { return {"theta_deg", "half_width"}; }

Tensor OrientedBarGenerator::forward(const Tensor& z) const {
    check_latent(z);
    const auto zv = z.data();
    const float max_rad = kMaxAngleDeg * std::numbers::pi_v<float> / 180.0f;
    const float t0 = std::tanh(zv[0]), t1 = std::tanh(zv[1]);
    const float theta = max_rad * t0;
    const float h = kHalfWidthMid + kHalfWidthHalf * t1;
    const float h2 = h * h;
    const float cs = std::cos(theta), sn = std::sin(theta);
    const std::size_t n = cfg_.size;
    const float c = 0.5f * static_cast<float>(n - 1);
    const float half_len = 0.3125f * static_cast<float>(n);
    const float cap_scale = 1.0f / (2.0f * half_len * kCapSoftness);

    std::vector<float> out(n * n), prof(n * n), cap(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const float dx = static_cast<float>(j) - c, dy = static_cast<float>(i) - c;
            const float along = dx * cs - dy * sn;
            const float perp = dx * sn + dy * cs;
            const float p = std::exp(-perp * perp / h2);
            const float e = 1.0f / (1.0f + std::exp(-(half_len * half_len - along * along) * cap_scale));
            prof[i * n + j] = p;
            cap[i * n + j] = e;
            out[i * n + j] = 2.0f * p * e - 1.0f;
        }
    }

    const float dtheta = max_rad * squash_slope(t0);
    const float dh = kHalfWidthHalf * squash_slope(t1);
    return custom_op("bar_render", {z}, {1, n, n}, std::move(out),
                     [=, prof = std::move(prof), cap = std::move(cap)](std::span<const float> g,
                                                                        std::span<std::span<float>> gin) {
                         double at = 0, ah = 0;
                         for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t j = 0; j < n; ++j) {
                                 const std::size_t k = i * n + j;
                                 const float dx = static_cast<float>(j) - c, dy = static_cast<float>(i) - c;
                                 const float along = dx * cs - dy * sn;
                                 const float perp = dx * sn + dy * cs;
                                 const float p = prof[k], e = cap[k];
                                 // d along/d theta = -perp, d perp/d theta = along
                                 const float dp_dtheta = p * (-2.0f * perp / h2) * along;
                                 const float de_dtheta = e * (1.0f - e) * (2.0f * along * perp) * cap_scale;
                                 const float dp_dh = p * 2.0f * perp * perp / (h2 * h);
                                 const float gk = 2.0f * g[k];
                                 at += gk * (dp_dtheta * e + p * de_dtheta);
                                 ah += gk * dp_dh * e;
                             }
                         }
                         gin[0][0] = static_cast<float>(at * dtheta);
                         gin[0][1] = static_cast<float>(ah * dh);
                     });
}

NamedTensors OrientedBarGenerator::parameters() const {
    return {{"generator.bar.config", Tensor::from({1}, {static_cast<float>(cfg_.size)})}};
}

// ---------------------------------------------------------------------------

std::unique_ptr<Generator> load_generator(const NamedTensors& tensors) {
    auto has = [&](const char* name) {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    };
    auto only = [&](const char* name) {
        if (tensors.size() != 1) throw FormatError(std::string("unexpected tensors alongside ") + name);
        return find_tensor(tensors, name);
    };
    if (has("generator.conv.config")) return ConvGenerator::from_weights(tensors);
    if (has("generator.blob.config")) {
        const Tensor& meta = only("generator.blob.config");
        if (meta.numel() != 2) throw FormatError("blob generator config must hold 2 values");
        return std::make_unique<BlobGenerator>(BlobConfig{read_size(meta, 0), meta.at(1) != 0.0f});
    }
    if (has("generator.bar.config")) {
        const Tensor& meta = only("generator.bar.config");
        return std::make_unique<OrientedBarGenerator>(BarConfig{read_size(meta, 0)});
    }
    throw FormatError("weight file does not describe a known generator");
}

std::unique_ptr<Generator> load_generator(const std::filesystem::path& path) {
    return load_generator(load_weights(path));
}

}  // namespace nam
