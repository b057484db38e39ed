#pragma once

#include "nam/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nam {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// First/second moment buffers and step count for one parameter tensor.
struct AdamState {
    std::vector<float> m;
    std::vector<float> v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update of each tensor in `params` using its own
/// state entry. Each parameter must have a populated gradient.
void adam_step(std::span<Tensor> params, const AdamConfig& cfg, std::span<AdamState> states);

/// Adam over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    void step();
    void zero_grad();

    const AdamConfig& config() const { return cfg_; }
    void set_lr(float lr) { cfg_.lr = lr; }
    std::span<const AdamState> states() const { return states_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<AdamState> states_;
};

}  // namespace nam
