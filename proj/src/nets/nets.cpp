#include "nam/nets.hpp"

#include "nam/errors.hpp"
#include "nam/ops.hpp"
#include "nam/random.hpp"

#include <cmath>

namespace nam {

namespace {

Tensor config_tensor(std::vector<float> values) {
    const std::size_t n = values.size();
    return Tensor::from({n}, std::move(values));
}

std::size_t config_int(const Tensor& t, std::size_t i) {
    if (i >= t.numel()) throw FormatError("config record too short");
    const float v = t.at(i);
    if (!(v >= 0.0f) || v != std::floor(v)) throw FormatError("config record holds a non-integer value");
    return static_cast<std::size_t>(v);
}

Tensor make_weight(Shape shape, std::size_t fan_in, std::uint64_t seed, bool trainable) {
    Tensor w = Tensor::zeros(std::move(shape), trainable);
    he_uniform_init(w, fan_in, seed);
    return w;
}

void require_image(const Tensor& x, const Shape& expected, const char* who) {
    if (x.shape() != expected) {
        throw ShapeError(std::string(who) + ": expected input " + shape_str(expected) + ", got " +
                         shape_str(x.shape()));
    }
}

}  // namespace

void he_uniform_init(Tensor& weight, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(seed);
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (auto& v : weight.mutable_data()) v = rng.uniform(-bound, bound);
}

std::vector<std::string> Generator::decoded_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < latent_dim(); ++i) names.push_back("z" + std::to_string(i));
    return names;
}

void Generator::check_latent(const Tensor& z) const {
    if (z.rank() != 1 || z.dim(0) != latent_dim()) {
        throw ShapeError(kind() + " generator: latent must be [" + std::to_string(latent_dim()) + "], got " +
                         shape_str(z.shape()));
    }
}

// ---------------------------------------------------------------------------
// ConvGenerator

ConvGenerator::ConvGenerator(ConvGeneratorConfig cfg) : cfg_(cfg) {
    if (cfg_.latent_dim == 0 || cfg_.base_channels < 2 || cfg_.out_channels == 0) {
        throw Error("ConvGenerator: invalid configuration");
    }
    const std::size_t c = cfg_.base_channels, half = c / 2;
    dense_w_ = make_weight({cfg_.latent_dim, c * 16}, cfg_.latent_dim, derive_seed(cfg_.seed, 0), false);
    dense_b_ = Tensor::zeros({c * 16});
    conv1_w_ = make_weight({half, c, 3, 3}, c * 9, derive_seed(cfg_.seed, 1), false);
    conv1_b_ = Tensor::zeros({half});
    conv2_w_ = make_weight({cfg_.out_channels, half, 3, 3}, half * 9, derive_seed(cfg_.seed, 2), false);
    conv2_b_ = Tensor::zeros({cfg_.out_channels});
}

std::unique_ptr<ConvGenerator> ConvGenerator::from_weights(const NamedTensors& tensors) {
    const Tensor& meta = find_tensor(tensors, "generator.conv.config");
    ConvGeneratorConfig cfg;
    cfg.latent_dim = config_int(meta, 0);
    cfg.base_channels = config_int(meta, 1);
    cfg.out_channels = config_int(meta, 2);
    auto g = std::make_unique<ConvGenerator>(cfg);
    assign_weights(g->parameters(), tensors);
    return g;
}

Tensor ConvGenerator::forward(const Tensor& z) const {
    check_latent(z);
    const std::size_t c = cfg_.base_channels;
    Tensor h = matmul(reshape(z, {1, cfg_.latent_dim}), dense_w_);
    h = relu(add(reshape(h, {c * 16}), dense_b_));
    h = reshape(h, {c, 4, 4});
    h = relu(conv2d(upsample_nearest(h), conv1_w_, conv1_b_, {1, 1}));
    h = conv2d(upsample_nearest(h), conv2_w_, conv2_b_, {1, 1});
    return tanh(h);
}

NamedTensors ConvGenerator::parameters() const {
    return {
        {"generator.conv.config",
         config_tensor({static_cast<float>(cfg_.latent_dim), static_cast<float>(cfg_.base_channels),
                        static_cast<float>(cfg_.out_channels)})},
        {"generator.dense.weight", dense_w_},
        {"generator.dense.bias", dense_b_},
        {"generator.conv1.weight", conv1_w_},
        {"generator.conv1.bias", conv1_b_},
        {"generator.conv2.weight", conv2_w_},
        {"generator.conv2.bias", conv2_b_},
    };
}

// ---------------------------------------------------------------------------
// Mapper

std::vector<std::size_t> mapper_widths(std::size_t base_width, std::size_t scales) {
    std::vector<std::size_t> w;
    for (std::size_t k = 0; k < scales; ++k) {
        const std::size_t drop = k * base_width;
        w.push_back(drop + base_width <= 4 * base_width ? 4 * base_width - drop : base_width);
    }
    return w;
}

Mapper::Mapper(MapperConfig cfg) : cfg_(cfg) {
    if (cfg_.in_channels == 0 || cfg_.out_channels == 0 || cfg_.base_width == 0) {
        throw Error("Mapper: channel counts and base width must be positive");
    }
    if (cfg_.scales < 2) throw Error("Mapper: at least 2 scales required");
    const std::size_t factor = std::size_t{1} << (cfg_.scales - 1);
    if (cfg_.height % factor != 0 || cfg_.width % factor != 0) {
        throw ShapeError("Mapper: image size " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) +
                         " not divisible by 2^(scales-1)");
    }
    if (cfg_.skip && cfg_.in_channels != cfg_.out_channels) {
        throw ShapeError("Mapper: skip connection needs equal input and output channels");
    }
    const auto w = widths();
    for (std::size_t k = 0; k < cfg_.scales; ++k) {
        const std::size_t in = (k == 0 ? 0 : w[k - 1]) + cfg_.in_channels;
        scales_.push_back({make_weight({w[k], in, 3, 3}, in * 9, derive_seed(cfg_.seed, k), true),
                           Tensor::zeros({w[k]}, true)});
    }
    const std::size_t last = w.back();
    head_.weight = make_weight({cfg_.out_channels, last, 1, 1}, last, derive_seed(cfg_.seed, cfg_.scales), true);
    if (cfg_.skip) std::fill(head_.weight.mutable_data().begin(), head_.weight.mutable_data().end(), 0.0f);
    head_.bias = Tensor::zeros({cfg_.out_channels}, true);
}

std::vector<std::size_t> Mapper::widths() const { return mapper_widths(cfg_.base_width, cfg_.scales); }

Tensor Mapper::forward(const Tensor& x) const {
    require_image(x, {cfg_.in_channels, cfg_.height, cfg_.width}, "Mapper");
    // pyramid[k] is the input at the resolution of scale k.
    std::vector<Tensor> pyramid(cfg_.scales);
    pyramid[cfg_.scales - 1] = x;
    for (std::size_t k = cfg_.scales - 1; k > 0; --k) pyramid[k - 1] = avg_pool2(pyramid[k]);

    Tensor h;
    for (std::size_t k = 0; k < cfg_.scales; ++k) {
        Tensor in = k == 0 ? pyramid[0] : concat_channels(upsample_nearest(h), pyramid[k]);
        h = relu(conv2d(in, scales_[k].weight, scales_[k].bias, {1, 1}));
    }
    Tensor out = conv2d(h, head_.weight, head_.bias, {1, 0});
    return cfg_.skip ? add(out, x) : out;
}

std::vector<Tensor> Mapper::trainable() const {
    std::vector<Tensor> out;
    for (const auto& l : scales_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    out.push_back(head_.weight);
    out.push_back(head_.bias);
    return out;
}

NamedTensors Mapper::parameters() const {
    NamedTensors out;
    out.emplace_back("mapper.config",
                     config_tensor({static_cast<float>(cfg_.in_channels), static_cast<float>(cfg_.out_channels),
                                    static_cast<float>(cfg_.height), static_cast<float>(cfg_.width),
                                    static_cast<float>(cfg_.base_width), static_cast<float>(cfg_.scales),
                                    cfg_.skip ? 1.0f : 0.0f}));
    for (std::size_t k = 0; k < scales_.size(); ++k) {
        out.emplace_back("mapper.scale" + std::to_string(k) + ".weight", scales_[k].weight);
        out.emplace_back("mapper.scale" + std::to_string(k) + ".bias", scales_[k].bias);
    }
    out.emplace_back("mapper.head.weight", head_.weight);
    out.emplace_back("mapper.head.bias", head_.bias);
    return out;
}

Mapper Mapper::from_weights(const NamedTensors& tensors) {
    const Tensor& meta = find_tensor(tensors, "mapper.config");
    MapperConfig cfg;
    cfg.in_channels = config_int(meta, 0);
    cfg.out_channels = config_int(meta, 1);
    cfg.height = config_int(meta, 2);
    cfg.width = config_int(meta, 3);
    cfg.base_width = config_int(meta, 4);
    cfg.scales = config_int(meta, 5);
    cfg.skip = config_int(meta, 6) != 0;
    Mapper m(cfg);
    NamedTensors weights(tensors.begin(), tensors.end());
    // The config record is validated above; compare it like any other tensor.
    assign_weights(m.parameters(), weights);
    return m;
}

Mapper Mapper::clone() const {
    Mapper m;
    m.cfg_ = cfg_;
    for (const auto& l : scales_) m.scales_.push_back({l.weight.clone(true), l.bias.clone(true)});
    m.head_ = {head_.weight.clone(true), head_.bias.clone(true)};
    return m;
}

Mapper Mapper::frozen() const {
    Mapper m;
    m.cfg_ = cfg_;
    for (const auto& l : scales_) m.scales_.push_back({l.weight.detach(), l.bias.detach()});
    m.head_ = {head_.weight.detach(), head_.bias.detach()};
    return m;
}

void Mapper::copy_weights_from(const Mapper& other) {
    auto dst = trainable();
    auto src = other.trainable();
    if (dst.size() != src.size()) throw ShapeError("Mapper: architecture mismatch in copy_weights_from");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].shape() != src[i].shape()) throw ShapeError("Mapper: architecture mismatch in copy_weights_from");
        std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
    }
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(FeatureExtractorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.block_widths.empty()) throw Error("FeatureExtractor: at least one block required");
    const std::size_t factor = std::size_t{1} << cfg_.block_widths.size();
    if (cfg_.height % factor != 0 || cfg_.width % factor != 0) {
        throw ShapeError("FeatureExtractor: image size not divisible by 2^blocks");
    }
    std::size_t in = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.block_widths.size(); ++i) {
        const std::size_t out = cfg_.block_widths[i];
        weights_.push_back(make_weight({out, in, 3, 3}, in * 9, derive_seed(cfg_.seed, i), false));
        biases_.push_back(Tensor::zeros({out}));
        in = out;
    }
}

FeatureExtractor FeatureExtractor::from_weights(const NamedTensors& tensors) {
    const Tensor& meta = find_tensor(tensors, "features.config");
    FeatureExtractorConfig cfg;
    cfg.in_channels = config_int(meta, 0);
    cfg.height = config_int(meta, 1);
    cfg.width = config_int(meta, 2);
    cfg.block_widths.clear();
    for (std::size_t i = 3; i < meta.numel(); ++i) cfg.block_widths.push_back(config_int(meta, i));
    FeatureExtractor f(cfg);
    assign_weights(f.parameters(), tensors);
    return f;
}

std::vector<Tensor> FeatureExtractor::forward(const Tensor& x) const {
    require_image(x, {cfg_.in_channels, cfg_.height, cfg_.width}, "FeatureExtractor");
    std::vector<Tensor> feats;
    Tensor h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = avg_pool2(relu(conv2d(pad_circular(h, 1), weights_[i], biases_[i])));
        feats.push_back(h);
    }
    return feats;
}

NamedTensors FeatureExtractor::parameters() const {
    std::vector<float> meta = {static_cast<float>(cfg_.in_channels), static_cast<float>(cfg_.height),
                               static_cast<float>(cfg_.width)};
    for (auto w : cfg_.block_widths) meta.push_back(static_cast<float>(w));
    NamedTensors out;
    out.emplace_back("features.config", config_tensor(std::move(meta)));
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        out.emplace_back("features.block" + std::to_string(i) + ".weight", weights_[i]);
        out.emplace_back("features.block" + std::to_string(i) + ".bias", biases_[i]);
    }
    return out;
}

}  // namespace nam
