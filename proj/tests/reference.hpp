#pragma once

// Straightforward 64-bit re-implementations of the forward passes, used as
// finite-difference oracles. Nothing here shares code with the library.

#include "test_support.hpp"

#include "nam/nets.hpp"
#include "nam/weight_file.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace nam::ref {

struct Arr {
    Shape shape;
    std::vector<double> v;

    Arr() = default;
    Arr(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0.0) {}
    static Arr of(const Tensor& t) {
        Arr a(t.shape());
        for (std::size_t k = 0; k < a.v.size(); ++k) a.v[k] = t.at(k);
        return a;
    }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    double& at(std::size_t c, std::size_t i, std::size_t j) { return v[(c * shape[1] + i) * shape[2] + j]; }
    double at(std::size_t c, std::size_t i, std::size_t j) const { return v[(c * shape[1] + i) * shape[2] + j]; }
};

inline Arr map(Arr a, const std::function<double(double)>& f) {
    for (auto& x : a.v) x = f(x);
    return a;
}

inline Arr zip(const Arr& a, const Arr& b, const std::function<double(double, double)>& f) {
    Arr out(a.shape);
    for (std::size_t k = 0; k < a.v.size(); ++k) out.v[k] = f(a.v[k], b.v.size() == 1 ? b.v[0] : b.v[k]);
    return out;
}

inline double sum(const Arr& a) {
    double s = 0.0;
    for (double x : a.v) s += x;
    return s;
}
inline double mean(const Arr& a) { return sum(a) / static_cast<double>(a.v.size()); }

inline double dot(const Arr& a, const Arr& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) s += a.v[k] * b.v[k];
    return s;
}

inline Arr matmul(const Arr& a, const Arr& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Arr out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) out.v[i * n + j] += a.v[i * k + p] * b.v[p * n + j];
    return out;
}

inline Arr transpose(const Arr& a) {
    const std::size_t m = a.dim(0), n = a.dim(1);
    Arr out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.v[j * m + i] = a.v[i * n + j];
    return out;
}

inline Arr conv2d(const Arr& x, const Arr& w, const Arr* bias, std::size_t stride, std::size_t pad) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), K = w.dim(2);
    const std::size_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
    Arr out({O, OH, OW});
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j) {
                double s = bias ? bias->v[o] : 0.0;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t p = 0; p < K; ++p)
                        for (std::size_t q = 0; q < K; ++q) {
                            const long u = static_cast<long>(i * stride + p) - static_cast<long>(pad);
                            const long t = static_cast<long>(j * stride + q) - static_cast<long>(pad);
                            if (u < 0 || t < 0 || u >= static_cast<long>(H) || t >= static_cast<long>(W)) continue;
                            s += x.at(c, u, t) * w.v[((o * C + c) * K + p) * K + q];
                        }
                out.at(o, i, j) = s;
            }
    return out;
}

inline Arr upsample(const Arr& x) {
    Arr out({x.dim(0), 2 * x.dim(1), 2 * x.dim(2)});
    for (std::size_t c = 0; c < x.dim(0); ++c)
        for (std::size_t i = 0; i < out.dim(1); ++i)
            for (std::size_t j = 0; j < out.dim(2); ++j) out.at(c, i, j) = x.at(c, i / 2, j / 2);
    return out;
}

inline Arr pad_circular(const Arr& x, std::size_t p) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Arr o({c, h + 2 * p, w + 2 * p});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h + 2 * p; ++i)
            for (std::size_t j = 0; j < w + 2 * p; ++j) o.at(k, i, j) = x.at(k, (i + h - p) % h, (j + w - p) % w);
    return o;
}

inline Arr avg_pool2(const Arr& x) {
    Arr out({x.dim(0), x.dim(1) / 2, x.dim(2) / 2});
    for (std::size_t c = 0; c < out.dim(0); ++c)
        for (std::size_t i = 0; i < out.dim(1); ++i)
            for (std::size_t j = 0; j < out.dim(2); ++j)
                out.at(c, i, j) = 0.25 * (x.at(c, 2 * i, 2 * j) + x.at(c, 2 * i + 1, 2 * j) +
                                          x.at(c, 2 * i, 2 * j + 1) + x.at(c, 2 * i + 1, 2 * j + 1));
    return out;
}

inline Arr concat(const Arr& a, const Arr& b) {
    Arr out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return out;
}

inline Arr relu(const Arr& a) { return map(a, [](double x) { return x > 0 ? x : 0.0; }); }

inline double softmax_ce(const Arr& logits, std::size_t label) {
    double mx = logits.v[0];
    for (double x : logits.v) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : logits.v) z += std::exp(x - mx);
    return -(logits.v[label] - mx - std::log(z));
}

inline double l1_mean(const Arr& a, const Arr& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) s += std::abs(a.v[k] - b.v[k]);
    return s / static_cast<double>(a.v.size());
}

inline Arr gram(const Arr& f) {
    const std::size_t c = f.dim(0), hw = f.dim(1) * f.dim(2);
    Arr flat({c, hw});
    flat.v = f.v;
    Arr g = matmul(flat, transpose(flat));
    for (auto& x : g.v) x /= static_cast<double>(c * hw);
    return g;
}

inline Arr param(const NamedTensors& p, const std::string& name) { return Arr::of(find_tensor(p, name)); }

/// conv3x3 (circular pad 1) -> relu -> 2x2 average pool, per block.
inline std::vector<Arr> features(const FeatureExtractor& fx, const Arr& x) {
    const auto p = fx.parameters();
    std::vector<Arr> out;
    Arr h = x;
    for (std::size_t i = 0; i < fx.blocks(); ++i) {
        const Arr w = param(p, "features.block" + std::to_string(i) + ".weight");
        const Arr b = param(p, "features.block" + std::to_string(i) + ".bias");
        h = avg_pool2(relu(conv2d(pad_circular(h, 1), w, &b, 1, 0)));
        out.push_back(h);
    }
    return out;
}

/// Multi-scale mapper with its weights passed explicitly, in trainable() order.
inline Arr mapper(const MapperConfig& cfg, const std::vector<Arr>& w, const Arr& x) {
    std::vector<Arr> pyr(cfg.scales);
    pyr[cfg.scales - 1] = x;
    for (std::size_t k = cfg.scales - 1; k > 0; --k) pyr[k - 1] = avg_pool2(pyr[k]);
    Arr h;
    for (std::size_t k = 0; k < cfg.scales; ++k) {
        const Arr in = k == 0 ? pyr[0] : concat(upsample(h), pyr[k]);
        h = relu(conv2d(in, w[2 * k], &w[2 * k + 1], 1, 1));
    }
    Arr out = conv2d(h, w[2 * cfg.scales], &w[2 * cfg.scales + 1], 1, 0);
    if (cfg.skip)
        for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] += x.v[k];
    return out;
}

/// Soft disc; constants restated from the generator's documented ranges.
inline Arr blob(const Arr& z, std::size_t n, bool with_level) {
    const double scale = static_cast<double>(n) / 16.0;
    const double lmin = std::log(2.5 * scale), lmax = std::log(4.5 * scale);
    const double c = 0.5 * static_cast<double>(n - 1), span = 0.5 * static_cast<double>(n) - 4.0;
    const double cx = c + span * std::tanh(z.v[0]), cy = c + span * std::tanh(z.v[1]);
    const double r = std::exp(0.5 * (lmin + lmax) + 0.5 * (lmax - lmin) * std::tanh(z.v[2]));
    const double level = with_level ? 0.2 + 0.2 * std::tanh(z.v[3]) : 0.0;
    const double contrast = with_level ? 0.6 : 1.0;
    Arr out({1, n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = static_cast<double>(j) - cx, dy = static_cast<double>(i) - cy;
            out.at(0, i, j) = 2.0 * (level + contrast * std::exp(-(dx * dx + dy * dy) / (r * r))) - 1.0;
        }
    return out;
}

inline Arr bar(const Arr& z, std::size_t n) {
    const double theta = 75.0 * std::numbers::pi / 180.0 * std::tanh(z.v[0]);
    const double h = 1.25 + 0.75 * std::tanh(z.v[1]);
    const double c = 0.5 * static_cast<double>(n - 1), half_len = 0.3125 * static_cast<double>(n);
    Arr out({1, n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = static_cast<double>(j) - c, dy = static_cast<double>(i) - c;
            const double along = dx * std::cos(theta) - dy * std::sin(theta);
            const double perp = dx * std::sin(theta) + dy * std::cos(theta);
            const double cap = 1.0 / (1.0 + std::exp(-(half_len * half_len - along * along) / half_len));
            out.at(0, i, j) = 2.0 * std::exp(-perp * perp / (h * h)) * cap - 1.0;
        }
    return out;
}

inline Arr conv_generator(const NamedTensors& p, const Arr& z) {
    const Arr dw = param(p, "generator.dense.weight"), db = param(p, "generator.dense.bias");
    const Arr w1 = param(p, "generator.conv1.weight"), b1 = param(p, "generator.conv1.bias");
    const Arr w2 = param(p, "generator.conv2.weight"), b2 = param(p, "generator.conv2.bias");
    Arr zr({1, z.v.size()});
    zr.v = z.v;
    Arr h = matmul(zr, dw);
    const std::size_t c = db.v.size() / 16;
    Arr img({c, 4, 4});
    for (std::size_t k = 0; k < img.v.size(); ++k) img.v[k] = std::max(0.0, h.v[k] + db.v[k]);
    img = relu(conv2d(upsample(img), w1, &b1, 1, 1));
    img = conv2d(upsample(img), w2, &b2, 1, 1);
    return map(img, [](double x) { return std::tanh(x); });
}

/// The fixed weights weighted_sum() multiplies by, as doubles.
inline Arr weights_for(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    return Arr::of(testing::rand_tensor(shape, rng, 0.5f, 1.5f, false));
}

// ---------------------------------------------------------------------------

struct GradCase {
    std::vector<Tensor> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> f;
    std::function<double(const std::vector<Arr>&)> oracle;
};

struct GradResult {
    double max_rel = 0.0;      // analytic gradient vs 64-bit central differences
    double forward_rel = 0.0;  // float forward vs 64-bit forward
};

/// Relative error per element against the larger of the two magnitudes,
/// floored at 1% of the tensor's largest numeric component so entries that
/// are zero up to rounding do not dominate.
inline GradResult check_gradients(const GradCase& c, double eps = 1e-6) {
    GradResult res;
    for (const auto& t : c.inputs)
        if (t.requires_grad()) const_cast<Tensor&>(t).zero_grad();
    const Tensor out = c.f(c.inputs);
    backward(out);

    std::vector<Arr> in;
    for (const auto& t : c.inputs) in.push_back(Arr::of(t));
    const double ref_out = c.oracle(in);
    res.forward_rel = std::abs(out.item() - ref_out) / std::max(1.0, std::abs(ref_out));

    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        if (!c.inputs[i].requires_grad()) continue;
        std::vector<double> numeric(in[i].v.size());
        double biggest = 0.0;
        for (std::size_t k = 0; k < numeric.size(); ++k) {
            const double keep = in[i].v[k];
            in[i].v[k] = keep + eps;
            const double up = c.oracle(in);
            in[i].v[k] = keep - eps;
            const double down = c.oracle(in);
            in[i].v[k] = keep;
            numeric[k] = (up - down) / (2.0 * eps);
            biggest = std::max(biggest, std::abs(numeric[k]));
        }
        const auto analytic = c.inputs[i].grad();
        for (std::size_t k = 0; k < numeric.size(); ++k) {
            const double a = analytic[k], n = numeric[k];
            const double denom = std::max({std::abs(a), std::abs(n), 1e-2 * biggest, 1e-12});
            res.max_rel = std::max(res.max_rel, std::abs(a - n) / denom);
        }
    }
    return res;
}

}  // namespace nam::ref
