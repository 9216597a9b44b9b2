#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "uierl/errors.hpp"

namespace uierl {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false; // backward already ran through this node
    std::string op;        // producing op, for diagnostics
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;

    void accum_grad(const T* g, std::int64_t n) {
        if (grad.empty()) grad.assign(data.size(), T(0));
        for (std::int64_t i = 0; i < n; ++i) grad[static_cast<size_t>(i)] += g[i];
    }
};

} // namespace detail

// Dense array with optional reverse-mode gradient tracking. Value semantics
// over a shared node: copies alias the same storage. Layout is row-major,
// channels-first for image-like tensors (C x H x W).
template <typename T>
class Tensor {
public:
    using Scalar = T;

    Tensor() = default;

    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

    static Tensor full(Shape shape, T value) {
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->data.assign(static_cast<size_t>(shape_numel(t.node_->shape)), value);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
            throw UsageError("tensor: data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return check().shape; }
    int ndim() const { return static_cast<int>(check().shape.size()); }
    int dim(int i) const { return check().shape.at(static_cast<size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(check().data.size()); }

    T* data() { return check().data.data(); }
    const T* data() const { return check().data.data(); }
    std::vector<T>& vec() { return check().data; }
    const std::vector<T>& vec() const { return check().data; }

    T item() const {
        if (numel() != 1) throw UsageError("item(): tensor is not scalar, shape " + shape_str(shape()));
        return check().data[0];
    }

    bool requires_grad() const { return check().requires_grad; }
    Tensor& set_requires_grad(bool v) {
        auto& n = check();
        if (!n.is_leaf) throw UsageError("set_requires_grad: only valid on leaf tensors");
        n.requires_grad = v;
        return *this;
    }

    bool is_leaf() const { return check().is_leaf; }

    bool has_grad() const { return defined() && !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (!has_grad()) throw UsageError("grad(): no gradient accumulated");
        return node_->grad;
    }
    void zero_grad() {
        if (defined()) node_->grad.clear();
    }

    // Deep copy with no graph history.
    Tensor clone() const {
        auto& n = check();
        return from(n.shape, n.data);
    }

    // Same storage contents, detached from the graph (copying; tensors are small
    // enough at desk scale that aliasing machinery is not worth it).
    Tensor detach() const { return clone(); }

    detail::Node<T>& node() { return check(); }
    const detail::Node<T>& node() const { return check(); }
    std::shared_ptr<detail::Node<T>> node_ptr() const { return node_; }

    static Tensor wrap(std::shared_ptr<detail::Node<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    detail::Node<T>& check() const {
        if (!node_) throw UsageError("operation on undefined tensor");
        return *node_;
    }
    std::shared_ptr<detail::Node<T>> node_;
};

// Reverse-mode sweep from `root`, seeding with `seed` (defaults to ones).
// Accumulates into the .grad of every reachable leaf with requires_grad set.
// The recorded trace is single-use: a second sweep through any already-swept
// node is rejected.
template <typename T>
void backward(const Tensor<T>& root, const Tensor<T>& seed = Tensor<T>{});

extern template void backward<float>(const Tensor<float>&, const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&, const Tensor<double>&);

} // namespace uierl
