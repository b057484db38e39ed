#pragma once

#include "nam/nets.hpp"
#include "nam/tensor.hpp"

#include <string>
#include <vector>

namespace nam {

enum class LossMode { pixel_l1, perceptual, gram_style };

std::string to_string(LossMode mode);
/// Accepts "l1"/"pixel_l1", "perceptual", "gram"/"gram_style".
LossMode parse_loss_mode(const std::string& name);

struct LossConfig {
    LossMode mode = LossMode::pixel_l1;
    /// One weight per feature block; empty means 1.0 for every block.
    std::vector<float> block_weights;
    float pixel_weight = 1.0f;

    /// Throws if any weight is negative or no term has positive weight.
    void validate(std::size_t blocks) const;
    float block_weight(std::size_t i) const { return block_weights.empty() ? 1.0f : block_weights.at(i); }
};

/// Mean absolute difference.
Tensor pixel_l1(const Tensor& a, const Tensor& b);

/// sum_i w_i * mean|phi_i(a) - phi_i(b)| + w_pixel * mean|a - b|
Tensor perceptual_loss(const FeatureExtractor& features, const Tensor& a, const Tensor& b, const LossConfig& cfg);

/// sum_i w_i * mean|Gram(phi_i(a)) - Gram(phi_i(b))| with
/// Gram(F) = F F^T / (channels * spatial) over features flattened to [C, H*W].
Tensor gram_style_loss(const FeatureExtractor& features, const Tensor& a, const Tensor& b, const LossConfig& cfg);

/// Channel Gram matrix of a [C,H,W] feature map.
Tensor gram_matrix(const Tensor& features);

/// Reconstruction distance in the configured mode. `features` may be null
/// only for pixel_l1.
Tensor reconstruction_loss(const LossConfig& cfg, const FeatureExtractor* features, const Tensor& a,
                           const Tensor& b);

}  // namespace nam
