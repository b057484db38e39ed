#include "nam/tensor.hpp"

#include "nam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace nam {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace detail {

std::vector<float>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(shape_numel(shape), 0.0f);
    return grad;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<float> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::make_shared<std::vector<float>>(std::move(values));
    node->requires_grad = requires_grad;
    return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& n) {
    if (!n) throw Error("use of an undefined tensor");
    return *n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::numel() const { return checked(node_).value->size(); }

std::span<const float> Tensor::data() const { return *checked(node_).value; }

std::span<float> Tensor::mutable_data() {
    checked(node_);
    return *node_->value;
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return data()[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw Error("requires_grad can only be changed on leaf tensors");
    node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return checked(node_).inputs.empty(); }

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const float> Tensor::grad() const { return checked(node_).grad; }

std::span<float> Tensor::mutable_grad() {
    checked(node_);
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    checked(node_);
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
    const auto& src = checked(node_);
    auto node = std::make_shared<detail::Node>();
    node->shape = src.shape;
    node->value = src.value;
    return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
    const auto& src = checked(node_);
    return Tensor(make_leaf(src.shape, *src.value, requires_grad));
}

void check_finite(std::span<const float> values, const char* what) {
    for (float v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

Tensor custom_op(const char* name, std::vector<Tensor> inputs, Shape shape,
                 std::vector<float> value, CustomBackward backward_cb) {
    if (value.size() != shape_numel(shape)) {
        throw ShapeError(std::string(name) + ": value does not match shape " + shape_str(shape));
    }
    check_finite(value, name);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::make_shared<std::vector<float>>(std::move(value));
    node->op = name;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return Tensor(std::move(node));

    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = [cb = std::move(backward_cb)](detail::Node& self) {
        std::vector<std::vector<float>> scratch(self.inputs.size());
        std::vector<std::span<float>> spans(self.inputs.size());
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            if (self.inputs[i]->requires_grad) {
                scratch[i].assign(self.inputs[i]->value->size(), 0.0f);
                spans[i] = scratch[i];
            }
        }
        cb(self.grad, spans);
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            if (!self.inputs[i]->requires_grad) continue;
            auto& g = self.inputs[i]->grad_buffer();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += scratch[i][k];
        }
    };
    return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward on undefined tensor");
    if (loss.numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) throw Error("backward on a loss that is not connected to any trainable leaf");

    // Iterative post-order DFS gives inputs before outputs.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    detail::Node* root = loss.node().get();
    root->grad_buffer()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->inputs.empty()) continue;
        if (!node->grad.empty() && node->backward_fn) node->backward_fn(*node);
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
    for (auto* node : order) {
        if (node->inputs.empty()) check_finite(node->grad, "gradient");
    }
}

}  // namespace nam
