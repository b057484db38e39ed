#include "nam/eval.hpp"

#include "nam/errors.hpp"
#include "nam/ops.hpp"
#include "nam/optim.hpp"
#include "nam/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nam {

double median(std::vector<double> v) {
    if (v.empty()) throw Error("median of an empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

namespace {

Metric summarize(std::string name, std::vector<double> details) {
    Metric m;
    m.name = std::move(name);
    m.n = details.size();
    m.value = median(details);
    m.mean = std::accumulate(details.begin(), details.end(), 0.0) / static_cast<double>(details.size());
    m.details = std::move(details);
    return m;
}

double param_distance(const Generator& gen, std::span<const float> a, std::span<const float> b,
                      const std::vector<std::size_t>& params) {
    const auto pa = gen.decode(a), pb = gen.decode(b);
    double d2 = 0.0;
    auto add = [&](std::size_t k) {
        if (k >= pa.size()) throw Error("parameter index " + std::to_string(k) + " out of range");
        const double d = static_cast<double>(pa[k]) - pb[k];
        d2 += d * d;
    };
    if (params.empty()) {
        for (std::size_t k = 0; k < pa.size(); ++k) add(k);
    } else {
        for (auto k : params) add(k);
    }
    return std::sqrt(d2);
}

std::vector<std::vector<float>> best_latents(const std::vector<InferenceResult>& results) {
    std::vector<std::vector<float>> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.best().z);
    return out;
}

}  // namespace

Metric latent_recovery_error(const Generator& gen, const std::vector<std::vector<float>>& recovered,
                             const std::vector<std::vector<float>>& truth, const std::vector<std::size_t>& params) {
    if (recovered.size() != truth.size()) {
        throw Error("latent_recovery_error: " + std::to_string(recovered.size()) + " recovered vs " +
                    std::to_string(truth.size()) + " true latents");
    }
    if (truth.empty()) throw Error("latent_recovery_error: no samples");
    std::vector<double> d;
    d.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) d.push_back(param_distance(gen, recovered[i], truth[i], params));
    return summarize("latent_recovery_error", std::move(d));
}

Metric latent_recovery_error(const Generator& gen, const std::vector<InferenceResult>& results,
                             const std::vector<std::vector<float>>& truth, const std::vector<std::size_t>& params) {
    return latent_recovery_error(gen, best_latents(results), truth, params);
}

Metric random_prior_error(const Generator& gen, const std::vector<std::vector<float>>& truth,
                          const std::vector<std::size_t>& params, std::size_t samples, std::uint64_t seed) {
    if (truth.empty() || samples == 0) throw Error("random_prior_error: need samples and ground truth");
    Rng rng(seed);
    std::vector<double> d;
    d.reserve(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        const auto z = rng.normal_vector(gen.latent_dim());
        d.push_back(param_distance(gen, z, truth[k % truth.size()], params));
    }
    return summarize("random_prior_error", std::move(d));
}

Metric orientation_residual(const std::vector<double>& recovered_deg, const std::vector<double>& true_deg) {
    if (recovered_deg.size() != true_deg.size()) throw Error("orientation_residual: count mismatch");
    if (true_deg.size() < 3) throw Error("orientation_residual: need at least 3 samples to fit an alignment");
    Metric best;
    bool have = false;
    for (double a : {1.0, -1.0}) {
        std::vector<double> off(true_deg.size());
        for (std::size_t i = 0; i < off.size(); ++i) off[i] = recovered_deg[i] - a * true_deg[i];
        const double b = median(off);
        std::vector<double> res(off.size());
        for (std::size_t i = 0; i < off.size(); ++i) res[i] = std::abs(off[i] - b);
        std::vector<double> sq(res.size());
        for (std::size_t i = 0; i < res.size(); ++i) sq[i] = res[i] * res[i];
        const double value = std::sqrt(median(sq));
        if (!have || value < best.value) {
            best = summarize("orientation_residual", res);
            best.value = value;
            have = true;
        }
    }
    return best;
}

Metric orientation_residual(const Generator& gen, const std::vector<InferenceResult>& results,
                            const std::vector<std::vector<float>>& truth) {
    if (results.size() != truth.size()) throw Error("orientation_residual: count mismatch");
    std::vector<double> rec, tru;
    for (std::size_t i = 0; i < results.size(); ++i) {
        rec.push_back(gen.decode(results[i].best().z).at(0));
        tru.push_back(gen.decode(truth[i]).at(0));
    }
    return orientation_residual(rec, tru);
}

// ---------------------------------------------------------------------------

ProxyClassifier::ProxyClassifier(const Shape& image_shape, ClassifierConfig cfg) : shape_(image_shape), cfg_(cfg) {
    if (shape_.size() != 3 || shape_[1] % 4 || shape_[2] % 4) {
        throw ShapeError("ProxyClassifier: image shape " + shape_str(shape_) + " must be [C,H,W] with H, W divisible by 4");
    }
    if (cfg_.classes < 2) throw Error("ProxyClassifier: need at least two classes");
    const std::size_t c = shape_[0], flat = 16 * (shape_[1] / 4) * (shape_[2] / 4);
    c1w_ = Tensor::zeros({8, c, 3, 3}, true);
    c1b_ = Tensor::zeros({8}, true);
    c2w_ = Tensor::zeros({16, 8, 3, 3}, true);
    c2b_ = Tensor::zeros({16}, true);
    dw_ = Tensor::zeros({flat, cfg_.classes}, true);
    db_ = Tensor::zeros({1, cfg_.classes}, true);
    he_uniform_init(c1w_, c * 9, derive_seed(cfg_.seed, 1));
    he_uniform_init(c2w_, 8 * 9, derive_seed(cfg_.seed, 2));
    he_uniform_init(dw_, flat, derive_seed(cfg_.seed, 3));
}

std::vector<Tensor> ProxyClassifier::params() const { return {c1w_, c1b_, c2w_, c2b_, dw_, db_}; }

Tensor ProxyClassifier::logits(const Tensor& image) const {
    if (image.shape() != shape_) {
        throw ShapeError("ProxyClassifier: expected " + shape_str(shape_) + ", got " + shape_str(image.shape()));
    }
    Tensor h = avg_pool2(relu(conv2d(image, c1w_, c1b_, {1, 1})));
    h = avg_pool2(relu(conv2d(h, c2w_, c2b_, {1, 1})));
    return matmul(reshape(h, {1, h.numel()}), dw_) + db_;
}

double ProxyClassifier::train(const std::vector<Tensor>& images, const std::vector<std::size_t>& labels) {
    if (images.empty() || images.size() != labels.size()) throw Error("ProxyClassifier::train: bad training set");
    for (auto l : labels)
        if (l >= cfg_.classes) throw Error("ProxyClassifier::train: label out of range");
    Adam opt(params(), AdamConfig{.lr = cfg_.lr});
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg_.seed, 4));
    double last = 0.0;
    for (std::size_t e = 0; e < cfg_.epochs; ++e) {
        rng.shuffle(order.begin(), order.end());
        double total = 0.0;
        for (std::size_t s = 0; s < order.size(); s += cfg_.batch_size) {
            const std::size_t end = std::min(order.size(), s + cfg_.batch_size);
            const float inv = 1.0f / static_cast<float>(end - s);
            opt.zero_grad();
            for (std::size_t k = s; k < end; ++k) {
                Tensor l = softmax_cross_entropy(logits(images[order[k]]), labels[order[k]]);
                total += l.item();
                backward(scale(l, inv));
            }
            opt.step();
        }
        last = total / static_cast<double>(order.size());
    }
    trained_ = true;
    return last;
}

std::size_t ProxyClassifier::predict(const Tensor& image) const {
    Tensor out = logits(image.detach());
    auto v = out.data();
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double ProxyClassifier::accuracy(const std::vector<Tensor>& images, const std::vector<std::size_t>& labels) const {
    if (images.empty() || images.size() != labels.size()) throw Error("ProxyClassifier::accuracy: bad evaluation set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < images.size(); ++i) hit += predict(images[i]) == labels[i];
    return static_cast<double>(hit) / static_cast<double>(images.size());
}

Metric proxy_classification_accuracy(const std::vector<Tensor>& mapped, const std::vector<std::size_t>& labels,
                                     const ProxyClassifier& classifier) {
    if (!classifier.trained()) throw Error("proxy_classification_accuracy: classifier has not been trained");
    if (mapped.empty() || mapped.size() != labels.size()) {
        throw Error("proxy_classification_accuracy: " + std::to_string(mapped.size()) + " images vs " +
                    std::to_string(labels.size()) + " labels");
    }
    std::vector<double> hits;
    hits.reserve(mapped.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) hits.push_back(classifier.predict(mapped[i]) == labels[i] ? 1.0 : 0.0);
    Metric m = summarize("proxy_accuracy", std::move(hits));
    m.value = m.mean;
    return m;
}

std::vector<std::size_t> nearest_neighbors(const std::vector<Tensor>& queries, const std::vector<Tensor>& pool) {
    if (pool.empty()) throw Error("nearest_neighbors: empty pool");
    std::vector<std::size_t> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
        double best = 0.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (pool[j].shape() != q.shape()) {
                throw ShapeError("nearest_neighbors: query " + shape_str(q.shape()) + " vs pool " +
                                 shape_str(pool[j].shape()));
            }
            auto a = q.data(), b = pool[j].data();
            double d = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(static_cast<double>(a[k]) - b[k]);
            if (j == 0 || d < best) {
                best = d;
                arg = j;
            }
        }
        out.push_back(arg);
    }
    return out;
}

}  // namespace nam
