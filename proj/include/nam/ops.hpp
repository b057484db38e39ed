#pragma once

#include "nam/tensor.hpp"

#include <cstddef>
#include <span>

namespace nam {

// Elementwise arithmetic. Shapes must match, or one operand must hold a
// single element, which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m,n] -> [n,m]
Tensor transpose(const Tensor& a);

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// input [C,H,W], weight [O,C,k,k], bias [O] or undefined. Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Conv2dOptions opts = {});
/// Nearest-neighbour upsampling by 2 on [C,H,W].
Tensor upsample_nearest(const Tensor& input);
/// Wraps [C,H,W] around itself by `pad` pixels on every side.
Tensor pad_circular(const Tensor& input, std::size_t pad);
/// 2x2 average pooling with stride 2 on [C,H,W]; H and W must be even.
Tensor avg_pool2(const Tensor& input);
/// Stacks [C1,H,W] and [C2,H,W] into [C1+C2,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log; inputs must be strictly positive.
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor pow(const Tensor& a, float exponent);

Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// -log softmax(logits)[label] for a logits vector of any shape.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, float s) { return scale(a, s); }
inline Tensor operator*(float s, const Tensor& a) { return scale(a, s); }

}  // namespace nam
