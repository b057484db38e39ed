#include "nam/losses.hpp"

#include "nam/errors.hpp"
#include "nam/ops.hpp"

namespace nam {

std::string to_string(LossMode mode) {
    switch (mode) {
        case LossMode::pixel_l1: return "l1";
        case LossMode::perceptual: return "perceptual";
        case LossMode::gram_style: return "gram";
    }
    return "?";
}

LossMode parse_loss_mode(const std::string& name) {
    if (name == "l1" || name == "pixel_l1") return LossMode::pixel_l1;
    if (name == "perceptual") return LossMode::perceptual;
    if (name == "gram" || name == "gram_style") return LossMode::gram_style;
    throw Error("unknown loss mode '" + name + "' (expected l1, perceptual or gram)");
}

void LossConfig::validate(std::size_t blocks) const {
    if (!block_weights.empty() && block_weights.size() != blocks) {
        throw Error("loss config: " + std::to_string(block_weights.size()) + " block weights for " +
                    std::to_string(blocks) + " feature blocks");
    }
    if (pixel_weight < 0.0f) throw Error("loss config: negative pixel weight");
    bool any = mode == LossMode::perceptual && pixel_weight > 0.0f;
    for (std::size_t i = 0; i < blocks; ++i) {
        if (block_weight(i) < 0.0f) throw Error("loss config: negative block weight");
        any = any || block_weight(i) > 0.0f;
    }
    if (mode == LossMode::pixel_l1) any = true;
    if (!any) throw Error("loss config: every term has zero weight");
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor pixel_l1(const Tensor& a, const Tensor& b) {
    require_same(a, b, "pixel_l1");
    return mean(abs(sub(a, b)));
}

Tensor perceptual_loss(const FeatureExtractor& features, const Tensor& a, const Tensor& b, const LossConfig& cfg) {
    require_same(a, b, "perceptual_loss");
    cfg.validate(features.blocks());
    Tensor total = scale(pixel_l1(a, b), cfg.pixel_weight);
    bool need_features = false;
    for (std::size_t i = 0; i < features.blocks(); ++i) need_features = need_features || cfg.block_weight(i) != 0.0f;
    if (!need_features) return total;
    auto fa = features.forward(a);
    auto fb = features.forward(b);
    for (std::size_t i = 0; i < fa.size(); ++i) {
        if (cfg.block_weight(i) == 0.0f) continue;
        total = add(total, scale(mean(abs(sub(fa[i], fb[i]))), cfg.block_weight(i)));
    }
    return total;
}

Tensor gram_matrix(const Tensor& features) {
    if (features.rank() != 3) throw ShapeError("gram_matrix: expected [C,H,W], got " + shape_str(features.shape()));
    const std::size_t c = features.dim(0), hw = features.dim(1) * features.dim(2);
    Tensor flat = reshape(features, {c, hw});
    return scale(matmul(flat, transpose(flat)), 1.0f / static_cast<float>(c * hw));
}

Tensor gram_style_loss(const FeatureExtractor& features, const Tensor& a, const Tensor& b, const LossConfig& cfg) {
    require_same(a, b, "gram_style_loss");
    LossConfig blocks_only = cfg;
    blocks_only.mode = LossMode::gram_style;
    blocks_only.validate(features.blocks());
    auto fa = features.forward(a);
    auto fb = features.forward(b);
    Tensor total;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        if (cfg.block_weight(i) == 0.0f) continue;
        Tensor term = scale(mean(abs(sub(gram_matrix(fa[i]), gram_matrix(fb[i])))), cfg.block_weight(i));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

Tensor reconstruction_loss(const LossConfig& cfg, const FeatureExtractor* features, const Tensor& a,
                           const Tensor& b) {
    switch (cfg.mode) {
        case LossMode::pixel_l1: return pixel_l1(a, b);
        case LossMode::perceptual:
        case LossMode::gram_style:
            if (features == nullptr) throw Error("loss mode " + to_string(cfg.mode) + " needs a feature extractor");
            return cfg.mode == LossMode::perceptual ? perceptual_loss(*features, a, b, cfg)
                                                    : gram_style_loss(*features, a, b, cfg);
    }
    throw Error("unreachable loss mode");
}

}  // namespace nam
