#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nam {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the computation graph. Leaves have no inputs; every other
// node knows how to push its gradient into the inputs that require one.
struct Node {
    Shape shape;
    std::shared_ptr<std::vector<float>> value;
    std::vector<float> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::vector<float>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float tensor with an optional gradient.
///
/// Copies are shallow: two Tensor handles copied from one another refer to the
/// same storage and graph node. Use clone() for an independent copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t i) const { return shape().at(i); }
    std::size_t numel() const;

    std::span<const float> data() const;
    /// Writable view of the storage. Intended for leaves (optimizer updates,
    /// initialization); mutating a tensor already recorded in a graph changes
    /// what backward sees.
    std::span<float> mutable_data();
    float item() const;
    float at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const float> grad() const;
    std::span<float> mutable_grad();
    void zero_grad();

    /// Same storage, no graph history, no gradient tracking.
    Tensor detach() const;
    /// Independent deep copy of the values; a leaf.
    Tensor clone(bool requires_grad = false) const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Gradient callback for custom_op: receives the output gradient and one
/// writable buffer per input (empty for inputs that do not require grad).
/// Buffers arrive zeroed; whatever is written is accumulated into the inputs.
using CustomBackward =
    std::function<void(std::span<const float> grad_out, std::span<std::span<float>> grad_in)>;

/// Records an operation whose forward value was computed by the caller.
Tensor custom_op(const char* name, std::vector<Tensor> inputs, Shape shape,
                 std::vector<float> value, CustomBackward backward);

/// Reverse pass from a scalar loss. Accumulates d loss / d leaf into every
/// leaf that requires grad; intermediate gradients are released afterwards.
void backward(const Tensor& loss);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void check_finite(std::span<const float> values, const char* what);

}  // namespace nam
