#pragma once

#include "nam/tensor.hpp"
#include "nam/weight_file.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nam {

/// A fixed differentiable map from a latent vector [d] to an image [C,H,W].
///
/// Generators are never trained here. Their parameters() include a config
/// record so a weight file alone is enough to rebuild the instance.
class Generator {
public:
    virtual ~Generator() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t latent_dim() const = 0;
    virtual Shape output_shape() const = 0;
    /// z must have shape [latent_dim]; output values lie in [-1, 1].
    virtual Tensor forward(const Tensor& z) const = 0;
    virtual NamedTensors parameters() const = 0;

    /// Interpretable parameters encoded by z (pixels, degrees, ...). Learned
    /// generators have none and return z unchanged.
    virtual std::vector<float> decode(std::span<const float> z) const { return {z.begin(), z.end()}; }
    virtual std::vector<std::string> decoded_names() const;

protected:
    void check_latent(const Tensor& z) const;
};

struct ConvGeneratorConfig {
    std::size_t latent_dim = 8;
    std::size_t base_channels = 16;
    std::size_t out_channels = 1;
    std::uint64_t seed = 0;
};

/// Miniature deconvolutional generator producing 16x16 images:
/// dense(d -> C*4*4) -> relu -> [upsample -> conv3x3 -> relu] -> [upsample -> conv3x3] -> tanh.
class ConvGenerator final : public Generator {
public:
    explicit ConvGenerator(ConvGeneratorConfig cfg);
    /// Rebuilds from a weight file produced by parameters().
    static std::unique_ptr<ConvGenerator> from_weights(const NamedTensors& tensors);

    std::string kind() const override { return "conv"; }
    std::size_t latent_dim() const override { return cfg_.latent_dim; }
    Shape output_shape() const override { return {cfg_.out_channels, 16, 16}; }
    Tensor forward(const Tensor& z) const override;
    NamedTensors parameters() const override;

    const ConvGeneratorConfig& config() const { return cfg_; }

private:
    ConvGeneratorConfig cfg_;
    Tensor dense_w_, dense_b_, conv1_w_, conv1_b_, conv2_w_, conv2_b_;
};

struct MapperConfig {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t base_width = 8;  // F
    std::size_t scales = 3;
    bool skip = false;
    std::uint64_t seed = 0;
};

/// Multi-scale mapping network T.
///
/// Scale 0 works at the coarsest resolution (input / 2^(scales-1)); each
/// later scale upsamples the previous features, concatenates the input
/// pooled to that resolution, and applies one 3x3 conv + relu. Widths run
/// 4F, 3F, ... floored at F. A 1x1 projection produces the output channels;
/// with skip enabled it is zero-initialized and the input is added back, so
/// a fresh skip mapper is the identity.
class Mapper {
public:
    explicit Mapper(MapperConfig cfg);
    static Mapper from_weights(const NamedTensors& tensors);

    Tensor forward(const Tensor& x) const;

    const MapperConfig& config() const { return cfg_; }
    std::vector<std::size_t> widths() const;
    /// Weight tensors only, in a fixed order.
    std::vector<Tensor> trainable() const;
    /// Config record plus weights; suitable for save_weights.
    NamedTensors parameters() const;

    /// Deep copy with its own storage.
    Mapper clone() const;
    /// Shares storage, never accumulates gradient. Used for fixed-T inference.
    Mapper frozen() const;
    void copy_weights_from(const Mapper& other);

private:
    struct Layer {
        Tensor weight;
        Tensor bias;
    };
    Mapper() = default;

    MapperConfig cfg_;
    std::vector<Layer> scales_;
    Layer head_;
};

/// Widths max(4F - kF, F) for k = 0..scales-1.
std::vector<std::size_t> mapper_widths(std::size_t base_width, std::size_t scales);

struct FeatureExtractorConfig {
    std::size_t in_channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    std::vector<std::size_t> block_widths = {8, 16, 32};
    std::uint64_t seed = 1234;
};

/// Fixed, seeded conv pyramid standing in for a pretrained perceptual
/// network. Block i is conv3x3 (circular padding) -> relu -> 2x2 average
/// pool and emits one feature map; weights never receive gradient.
class FeatureExtractor {
public:
    explicit FeatureExtractor(FeatureExtractorConfig cfg);
    static FeatureExtractor from_weights(const NamedTensors& tensors);

    std::vector<Tensor> forward(const Tensor& x) const;

    const FeatureExtractorConfig& config() const { return cfg_; }
    std::size_t blocks() const { return cfg_.block_widths.size(); }
    NamedTensors parameters() const;

private:
    FeatureExtractorConfig cfg_;
    std::vector<Tensor> weights_, biases_;
};

/// Uniform He-style fan-in initialization in place.
void he_uniform_init(Tensor& weight, std::size_t fan_in, std::uint64_t seed);

}  // namespace nam
