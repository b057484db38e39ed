#include "nam/optim.hpp"

#include "nam/errors.hpp"

#include <cmath>

namespace nam {

void adam_step(std::span<Tensor> params, const AdamConfig& cfg, std::span<AdamState> states) {
    if (params.size() != states.size()) throw Error("adam_step: one state entry per parameter required");
    if (!(cfg.lr > 0.0f) || !(cfg.eps > 0.0f) || cfg.beta1 < 0.0f || cfg.beta1 >= 1.0f ||
        cfg.beta2 < 0.0f || cfg.beta2 >= 1.0f) {
        throw Error("adam_step: invalid hyperparameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw Error("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        AdamState& s = states[i];
        const std::size_t n = p.numel();
        if (s.m.empty()) {
            s.m.assign(n, 0.0f);
            s.v.assign(n, 0.0f);
        }
        ++s.step;
        const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(s.step));
        const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(s.step));
        const float step_size = static_cast<float>(cfg.lr / bc1);
        const float bc2_sqrt = static_cast<float>(std::sqrt(bc2));
        auto g = p.grad();
        auto w = p.mutable_data();
        for (std::size_t k = 0; k < n; ++k) {
            s.m[k] = cfg.beta1 * s.m[k] + (1.0f - cfg.beta1) * g[k];
            s.v[k] = cfg.beta2 * s.v[k] + (1.0f - cfg.beta2) * g[k] * g[k];
            w[k] -= step_size * s.m[k] / (std::sqrt(s.v[k]) / bc2_sqrt + cfg.eps);
        }
        check_finite(w, "adam update");
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg), states_(params_.size()) {}

void Adam::step() { adam_step(params_, cfg_, states_); }

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace nam
