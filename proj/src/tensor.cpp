#include "uierl/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace uierl {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw UsageError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

template <typename T>
void backward(const Tensor<T>& root, const Tensor<T>& seed) {
    using NodeT = detail::Node<T>;
    NodeT* r = &const_cast<Tensor<T>&>(root).node();
    if (!r->requires_grad)
        throw UsageError("backward: root does not require grad");
    if (r->consumed)
        throw UsageError("backward: trace already consumed");

    // Postorder DFS over grad-requiring nodes. The order holds owning
    // pointers: the sweep below releases graph edges as it goes, which may
    // otherwise free a node that is still queued.
    std::vector<std::shared_ptr<NodeT>> order;
    std::unordered_set<NodeT*> visited;
    std::vector<std::pair<std::shared_ptr<NodeT>, size_t>> stack;
    stack.emplace_back(root.node_ptr(), 0);
    visited.insert(r);
    while (!stack.empty()) {
        NodeT* n = stack.back().first.get();
        const size_t idx = stack.back().second;
        if (idx < n->parents.size()) {
            ++stack.back().second;
            const std::shared_ptr<NodeT>& p = n->parents[idx];
            if (p->requires_grad && !visited.count(p.get())) {
                if (p->consumed)
                    throw UsageError("backward: trace already consumed");
                visited.insert(p.get());
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    // Seed the root.
    if (seed.defined()) {
        if (seed.shape() != r->shape)
            throw UsageError("backward: seed shape " + shape_str(seed.shape()) +
                             " does not match output shape " + shape_str(r->shape));
        r->accum_grad(seed.data(), seed.numel());
    } else {
        std::vector<T> ones(r->data.size(), T(1));
        r->accum_grad(ones.data(), static_cast<std::int64_t>(ones.size()));
    }

    // Reverse topological sweep. Non-leaf nodes release their gradient and
    // graph edges once propagated; the consumed flag keeps double sweeps
    // detectable.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT* n = it->get();
        if (n->is_leaf) continue;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        n->consumed = true;
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->backward_fn = nullptr;
        n->parents.clear();
    }
}

template void backward<float>(const Tensor<float>&, const Tensor<float>&);
template void backward<double>(const Tensor<double>&, const Tensor<double>&);

} // namespace uierl
