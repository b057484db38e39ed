#pragma once

#include "nam/nets.hpp"
#include "nam/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace nam {

struct BlobConfig {
    std::size_t size = 16;
    /// Adds a fourth latent that shifts the background level. The shift is
    /// invisible after the edge transform, which makes (blob, edge) a
    /// many-to-one pair.
    bool with_level = false;
};

/// Soft disc exp(-((u-cx)^2 + (v-cy)^2) / r^2) on a size x size canvas.
///
/// Latents (cx, cy, log r) pass through tanh squashing into the centre
/// range [c - span, c + span] with c = (size-1)/2, span = size/2 - 3, and
/// r in [1.5, 4] * size/16.
class BlobGenerator final : public Generator {
public:
    explicit BlobGenerator(BlobConfig cfg = {});

    std::string kind() const override { return "blob"; }
    std::size_t latent_dim() const override { return cfg_.with_level ? 4 : 3; }
    Shape output_shape() const override { return {1, cfg_.size, cfg_.size}; }
    Tensor forward(const Tensor& z) const override;
    NamedTensors parameters() const override;
    /// (cx, cy, r[, level]) in pixels; level in [0, 0.4].
    std::vector<float> decode(std::span<const float> z) const override;
    std::vector<std::string> decoded_names() const override;

    const BlobConfig& config() const { return cfg_; }
    float center() const;
    float center_span() const;
    /// Latent coordinate that places the centre at pixel coordinate `pos`.
    float encode_center(float pos) const;

private:
    BlobConfig cfg_;
};

struct BarConfig {
    std::size_t size = 32;
};

/// Anti-aliased oriented bar through the image centre.
///
/// Orientation theta = 75 deg * tanh(z0), measured counter-clockwise from
/// the horizontal; Gaussian cross-section with half-width
/// 1.25 + 0.75 tanh(z1) pixels; soft end caps at +-0.3125*size.
class OrientedBarGenerator final : public Generator {
public:
    explicit OrientedBarGenerator(BarConfig cfg = {});

    std::string kind() const override { return "bar"; }
    std::size_t latent_dim() const override { return 2; }
    Shape output_shape() const override { return {1, cfg_.size, cfg_.size}; }
    Tensor forward(const Tensor& z) const override;
    NamedTensors parameters() const override;
    /// (theta in degrees, half-width in pixels)
    std::vector<float> decode(std::span<const float> z) const override;
    std::vector<std::string> decoded_names() const override;

    static constexpr float kMaxAngleDeg = 75.0f;

private:
    BarConfig cfg_;
};

/// Rebuilds any generator from its weight records (conv, blob or bar).
std::unique_ptr<Generator> load_generator(const NamedTensors& tensors);
std::unique_ptr<Generator> load_generator(const std::filesystem::path& path);

enum class TransformKind { identity, edge, invert, blur, colorize };

std::string to_string(TransformKind kind);
TransformKind parse_transform(const std::string& name);

/// Fixed image-to-image relation used to manufacture target domains.
/// Not differentiable; inputs and outputs are in [-1, 1].
struct DomainTransform {
    TransformKind kind = TransformKind::identity;

    Tensor apply(const Tensor& image) const;
    Shape output_shape(const Shape& in) const;
};

/// Sobel gradient magnitude with replicate padding, normalized to [0,1] by
/// the image maximum and mapped back to [-1,1].
Tensor edge_transform(const Tensor& image);
/// 3x3 binomial blur, 2x2 average pool, nearest upsample.
Tensor blur_transform(const Tensor& image);
Tensor invert_transform(const Tensor& image);
/// Single channel to RGB along a fixed two-colour palette.
Tensor colorize_transform(const Tensor& image);

struct DomainPair {
    /// Ground-truth latents, one row per sample. Evaluation only.
    std::vector<std::vector<float>> latents;
    std::vector<Tensor> ys;
};

/// Samples z_i ~ N(0, I) and returns y_i = transform(G(z_i)).
DomainPair make_domain_pair(const Generator& gen, const DomainTransform& transform, std::size_t n,
                            std::uint64_t seed);

struct LabeledLatents {
    std::vector<std::vector<float>> latents;
    std::vector<std::size_t> labels;
};

/// Blob latents labelled by which of `classes` horizontal bands holds the
/// centre. Centres keep `margin` pixels away from band boundaries so every
/// label is unambiguous.
LabeledLatents sample_blob_classes(const BlobGenerator& gen, std::size_t n, std::size_t classes,
                                   std::uint64_t seed, float margin = 0.6f);

/// Renders a batch of latents without tracking gradients.
std::vector<Tensor> render(const Generator& gen, const std::vector<std::vector<float>>& latents);

}  // namespace nam
