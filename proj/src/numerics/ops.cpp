#include "nam/ops.hpp"

#include "nam/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nam {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor record(const char* name, Shape shape, std::vector<float> value,
              std::vector<Tensor> inputs, std::function<void(Node&)> fn) {
    check_finite(value, name);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::make_shared<std::vector<float>>(std::move(value));
    node->op = name;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
        node->requires_grad = true;
        for (const auto& t : inputs) node->inputs.push_back(t.node());
        node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
}

// Gradient buffer of input i, or nullptr when that input is not tracked.
float* grad_of(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

const float* value_of(Node& self, std::size_t i) { return self.inputs[i]->value->data(); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

enum class Bcast { same, scalar_a, scalar_b };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (b.numel() == 1) return Bcast::scalar_b;
    if (a.numel() == 1) return Bcast::scalar_a;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <class Fwd, class Da, class Db>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
    Bcast kind = broadcast_kind(a, b, name);
    const Shape& out_shape = kind == Bcast::scalar_a ? b.shape() : a.shape();
    std::size_t n = shape_numel(out_shape);
    auto av = a.data();
    auto bv = b.data();
    auto ia = [kind](std::size_t i) { return kind == Bcast::scalar_a ? 0 : i; };
    auto ib = [kind](std::size_t i) { return kind == Bcast::scalar_b ? 0 : i; };
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ia(i)], bv[ib(i)]);
    return record(name, out_shape, std::move(out), {a, b}, [=](Node& self) {
        const float* x = value_of(self, 0);
        const float* y = value_of(self, 1);
        const float* g = self.grad.data();
        if (float* ga = grad_of(self, 0)) {
            for (std::size_t i = 0; i < n; ++i) ga[ia(i)] += g[i] * da(x[ia(i)], y[ib(i)]);
        }
        if (float* gb = grad_of(self, 1)) {
            for (std::size_t i = 0; i < n; ++i) gb[ib(i)] += g[i] * db(x[ia(i)], y[ib(i)]);
        }
    });
}

template <class Fwd, class Deriv>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
    auto av = a.data();
    std::vector<float> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return record(name, a.shape(), std::move(out), {a}, [=](Node& self) {
        const float* x = value_of(self, 0);
        const float* y = self.value->data();
        const float* g = self.grad.data();
        float* gx = grad_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
    });
}

void require_chw(const Tensor& t, const char* op) {
    require(t.rank() == 3, std::string(op) + ": expected [C,H,W], got " + shape_str(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
        [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
        [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y) { return y; },
        [](float x, float) { return x; });
}

Tensor scale(const Tensor& a, float s) {
    return unary(
        "scale", a, [s](float x) { return s * x; }, [s](float, float) { return s; });
}

Tensor add_scalar(const Tensor& a, float s) {
    return unary(
        "add_scalar", a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto av = a.data();
    auto bv = b.data();
    std::vector<float> out(m * n, 0.0f);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = av[i * k + p];
            const float* brow = &bv[p * n];
            float* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return record("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const float* A = value_of(self, 0);
        const float* B = value_of(self, 1);
        const float* G = self.grad.data();
        if (float* gA = grad_of(self, 0)) {
            // dA = G B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    float acc = 0.0f;
                    for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
                    gA[i * k + p] += acc;
                }
            }
        }
        if (float* gB = grad_of(self, 1)) {
            // dB = A^T G
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const float aip = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += aip * G[i * n + j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, "transpose: expected rank 2, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    auto av = a.data();
    std::vector<float> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return record("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
        const float* g = self.grad.data();
        float* ga = grad_of(self, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeom {
    std::size_t C, H, W, O, K, stride, pad, OH, OW;

    std::size_t patch() const { return C * K * K; }
    std::size_t positions() const { return OH * OW; }

    // Input coordinate for output index o and kernel tap k, or -1 when it
    // falls in the zero padding.
    long source(std::size_t o, std::size_t k, std::size_t extent) const {
        const long v = static_cast<long>(o * stride + k) - static_cast<long>(pad);
        return v >= 0 && v < static_cast<long>(extent) ? v : -1;
    }
};

// Unfolds the input into a [C*K*K, OH*OW] patch matrix.
std::vector<float> im2col(const float* x, const ConvGeom& g) {
    std::vector<float> col(g.patch() * g.positions(), 0.0f);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.C; ++c) {
        const float* plane = x + c * g.H * g.W;
        for (std::size_t ky = 0; ky < g.K; ++ky) {
            for (std::size_t kx = 0; kx < g.K; ++kx, ++row) {
                float* dst = &col[row * g.positions()];
                for (std::size_t oy = 0; oy < g.OH; ++oy) {
                    const long iy = g.source(oy, ky, g.H);
                    if (iy < 0) continue;
                    const float* src = plane + iy * static_cast<long>(g.W);
                    for (std::size_t ox = 0; ox < g.OW; ++ox) {
                        const long ix = g.source(ox, kx, g.W);
                        if (ix >= 0) dst[oy * g.OW + ox] = src[ix];
                    }
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: scatters patch gradients back onto the input.
void col2im_add(const float* col, const ConvGeom& g, float* gx) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.C; ++c) {
        float* plane = gx + c * g.H * g.W;
        for (std::size_t ky = 0; ky < g.K; ++ky) {
            for (std::size_t kx = 0; kx < g.K; ++kx, ++row) {
                const float* src = col + row * g.positions();
                for (std::size_t oy = 0; oy < g.OH; ++oy) {
                    const long iy = g.source(oy, ky, g.H);
                    if (iy < 0) continue;
                    float* dst = plane + iy * static_cast<long>(g.W);
                    for (std::size_t ox = 0; ox < g.OW; ++ox) {
                        const long ix = g.source(ox, kx, g.W);
                        if (ix >= 0) dst[ix] += src[oy * g.OW + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opts) {
    require_chw(input, "conv2d");
    require(weight.rank() == 4 && weight.dim(2) == weight.dim(3),
            "conv2d: weight must be [O,C,k,k], got " + shape_str(weight.shape()));
    require(weight.dim(1) == input.dim(0), "conv2d: weight " + shape_str(weight.shape()) +
                                               " does not match input " + shape_str(input.shape()));
    require(weight.dim(2) <= 5, "conv2d: kernels larger than 5x5 are not supported");
    require(opts.stride == 1 || opts.stride == 2, "conv2d: stride must be 1 or 2");
    const bool has_bias = bias.defined();
    if (has_bias) {
        require(bias.rank() == 1 && bias.dim(0) == weight.dim(0),
                "conv2d: bias must be [O], got " + shape_str(bias.shape()));
    }
    ConvGeom g{input.dim(0), input.dim(1), input.dim(2), weight.dim(0), weight.dim(2),
               opts.stride, opts.padding, 0, 0};
    require(g.H + 2 * g.pad >= g.K && g.W + 2 * g.pad >= g.K, "conv2d: kernel larger than padded input");
    g.OH = (g.H + 2 * g.pad - g.K) / g.stride + 1;
    g.OW = (g.W + 2 * g.pad - g.K) / g.stride + 1;

    auto col = std::make_shared<std::vector<float>>(im2col(input.data().data(), g));
    const std::size_t P = g.positions(), Q = g.patch();
    std::vector<float> out(g.O * P);
    MatMap out_m(out.data(), g.O, P);
    out_m.noalias() = ConstMatMap(weight.data().data(), g.O, Q) * ConstMatMap(col->data(), Q, P);
    if (has_bias) {
        for (std::size_t o = 0; o < g.O; ++o) out_m.row(o).array() += bias.data()[o];
    }

    std::vector<Tensor> ins{input, weight};
    if (has_bias) ins.push_back(bias);
    return record("conv2d", {g.O, g.OH, g.OW}, std::move(out), std::move(ins), [g, has_bias, col](Node& self) {
        const std::size_t P = g.positions(), Q = g.patch();
        ConstMatMap gout(self.grad.data(), g.O, P);
        if (float* gw = grad_of(self, 1)) {
            MatMap(gw, g.O, Q).noalias() += gout * ConstMatMap(col->data(), Q, P).transpose();
        }
        if (has_bias) {
            if (float* gb = grad_of(self, 2)) {
                for (std::size_t o = 0; o < g.O; ++o) gb[o] += gout.row(o).sum();
            }
        }
        if (float* gx = grad_of(self, 0)) {
            RowMat gcol = ConstMatMap(value_of(self, 1), g.O, Q).transpose() * gout;
            col2im_add(gcol.data(), g, gx);
        }
    });
}

Tensor upsample_nearest(const Tensor& input) {
    require_chw(input, "upsample_nearest");
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    auto x = input.data();
    std::vector<float> out(C * 4 * H * W);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < 2 * H; ++y)
            for (std::size_t xx = 0; xx < 2 * W; ++xx)
                out[(c * 2 * H + y) * 2 * W + xx] = x[(c * H + y / 2) * W + xx / 2];
    return record("upsample_nearest", {C, 2 * H, 2 * W}, std::move(out), {input}, [C, H, W](Node& self) {
        const float* g = self.grad.data();
        float* gx = grad_of(self, 0);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t xx = 0; xx < 2 * W; ++xx)
                    gx[(c * H + y / 2) * W + xx / 2] += g[(c * 2 * H + y) * 2 * W + xx];
    });
}

Tensor pad_circular(const Tensor& input, std::size_t pad) {
    require_chw(input, "pad_circular");
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    require(pad <= H && pad <= W, "pad_circular: padding larger than input " + shape_str(input.shape()));
    const std::size_t PH = H + 2 * pad, PW = W + 2 * pad;
    // source index of every padded pixel, shared by forward and backward
    std::vector<std::size_t> src(C * PH * PW);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < PH; ++y)
            for (std::size_t xx = 0; xx < PW; ++xx)
                src[(c * PH + y) * PW + xx] = (c * H + (y + H - pad) % H) * W + (xx + W - pad) % W;
    auto x = input.data();
    std::vector<float> out(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) out[k] = x[src[k]];
    return record("pad_circular", {C, PH, PW}, std::move(out), {input}, [src = std::move(src)](Node& self) {
        const float* g = self.grad.data();
        float* gx = grad_of(self, 0);
        for (std::size_t k = 0; k < src.size(); ++k) gx[src[k]] += g[k];
    });
}

Tensor avg_pool2(const Tensor& input) {
    require_chw(input, "avg_pool2");
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    require(H % 2 == 0 && W % 2 == 0, "avg_pool2: spatial size must be even, got " + shape_str(input.shape()));
    const std::size_t OH = H / 2, OW = W / 2;
    auto x = input.data();
    std::vector<float> out(C * OH * OW);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < OH; ++y)
            for (std::size_t xx = 0; xx < OW; ++xx) {
                const float* p = &x[(c * H + 2 * y) * W + 2 * xx];
                out[(c * OH + y) * OW + xx] = 0.25f * (p[0] + p[1] + p[W] + p[W + 1]);
            }
    return record("avg_pool2", {C, OH, OW}, std::move(out), {input}, [C, H, W, OH, OW](Node& self) {
        const float* g = self.grad.data();
        float* gx = grad_of(self, 0);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < OH; ++y)
                for (std::size_t xx = 0; xx < OW; ++xx) {
                    const float v = 0.25f * g[(c * OH + y) * OW + xx];
                    float* p = &gx[(c * H + 2 * y) * W + 2 * xx];
                    p[0] += v;
                    p[1] += v;
                    p[W] += v;
                    p[W + 1] += v;
                }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_chw(a, "concat_channels");
    require_chw(b, "concat_channels");
    require(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
            "concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t na = a.numel(), nb = b.numel();
    std::vector<float> out;
    out.reserve(na + nb);
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    return record("concat_channels", {a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out), {a, b},
                  [na, nb](Node& self) {
                      const float* g = self.grad.data();
                      if (float* ga = grad_of(self, 0))
                          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                      if (float* gb = grad_of(self, 1))
                          for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                  });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh(const Tensor& a) {
    return unary(
        "tanh", a, [](float x) { return std::tanh(x); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& a) {
    for (float v : a.data()) {
        if (!(v > 0.0f)) throw NumericError("log of a non-positive value");
    }
    return unary(
        "log", a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

Tensor abs(const Tensor& a) {
    return unary(
        "abs", a, [](float x) { return std::fabs(x); },
        [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor pow(const Tensor& a, float exponent) {
    return unary(
        "pow", a, [exponent](float x) { return std::pow(x, exponent); },
        [exponent](float x, float) { return exponent * std::pow(x, exponent - 1.0f); });
}

Tensor reshape(const Tensor& a, Shape shape) {
    require(shape_numel(shape) == a.numel(),
            "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    std::vector<float> out(a.data().begin(), a.data().end());
    return record("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
        float* ga = grad_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    return record("sum", {1}, {static_cast<float>(acc)}, {a}, [](Node& self) {
        float* ga = grad_of(self, 0);
        const float g = self.grad[0];
        const std::size_t n = self.inputs[0]->value->size();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    const std::size_t n = a.numel();
    return record("mean", {1}, {static_cast<float>(acc / static_cast<double>(n))}, {a}, [n](Node& self) {
        float* ga = grad_of(self, 0);
        const float g = self.grad[0] / static_cast<float>(n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label) {
    const std::size_t k = logits.numel();
    require(label < k, "softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                           std::to_string(k) + " classes");
    auto z = logits.data();
    const float zmax = *std::max_element(z.begin(), z.end());
    std::vector<float> prob(k);
    double norm = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        prob[i] = std::exp(z[i] - zmax);
        norm += prob[i];
    }
    for (auto& p : prob) p = static_cast<float>(p / norm);
    const float loss = static_cast<float>(std::log(norm) + zmax - z[label]);
    return record("softmax_cross_entropy", {1}, {loss}, {logits}, [prob, label](Node& self) {
        float* gz = grad_of(self, 0);
        const float g = self.grad[0];
        for (std::size_t i = 0; i < prob.size(); ++i) gz[i] += g * (prob[i] - (i == label ? 1.0f : 0.0f));
    });
}

}  // namespace nam
