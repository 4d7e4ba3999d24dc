#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "semidrd/core/tensor.hpp"

namespace semidrd {

/// Learnable tensor living outside any graph. Gradients accumulate across
/// backward() calls until zero_grad().
template <class T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    explicit Param(Tensor<T> v) : value(std::move(v)) {}

    void zero_grad() { grad = Tensor<T>(); }
    Tensor<T>& grad_buf() {
        if (grad.empty()) grad = Tensor<T>::zeros_like(value);
        return grad;
    }
};

/// Dynamic reverse-mode tape. One Graph instance per training step: forward
/// ops append nodes, backward() sweeps them in reverse creation order (which
/// is a topological order by construction) and finally flushes gradients into
/// the bound Params.
template <class T>
class Graph {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // empty until some child accumulates into it
        bool needs_grad = false;
        std::function<void(Graph&)> backward;  // empty for leaves
    };

    struct Value {
        Graph* g = nullptr;
        int id = -1;

        const Tensor<T>& val() const { return g->node(id).value; }
        bool needs_grad() const { return g->node(id).needs_grad; }
        int64_t n() const { return val().dims[0]; }
        int64_t c() const { return val().dims[1]; }
        int64_t h() const { return val().dims[2]; }
        int64_t w() const { return val().dims[3]; }
    };

    Value constant(Tensor<T> v) { return push(std::move(v), false, {}); }

    Value input(Tensor<T> v, bool needs_grad = false) { return push(std::move(v), needs_grad, {}); }

    Value param(Param<T>& p) {
        Value v = push(p.value, true, {});
        bindings_.emplace_back(v.id, &p);
        return v;
    }

    Value push(Tensor<T> v, bool needs_grad, std::function<void(Graph&)> backward) {
        nodes_.push_back(Node{std::move(v), Tensor<T>(), needs_grad, std::move(backward)});
        return Value{this, static_cast<int>(nodes_.size()) - 1};
    }

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    /// Gradient buffer of a node, allocated as zeros on first touch.
    Tensor<T>& grad_buf(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.empty()) n.grad = Tensor<T>::zeros_like(n.value);
        return n.grad;
    }
    bool has_grad(int id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }

    /// Reverse sweep from a scalar loss. Interior node gradients are released
    /// as soon as their backward ran, bounding peak memory; leaf gradients
    /// (params, inputs flagged needs_grad) stay readable afterwards.
    void backward(Value loss) {
        if (loss.val().numel() != 1) throw std::logic_error("backward: loss must be scalar");
        grad_buf(loss.id).fill(T(1));
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.grad.empty() || !n.backward) continue;
            n.backward(*this);
            n.backward = nullptr;
            n.grad = Tensor<T>();
        }
        for (auto& [id, p] : bindings_) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.grad.empty()) continue;
            Tensor<T>& g = p->grad_buf();
            for (size_t k = 0; k < g.data.size(); ++k) g.data[k] += n.grad.data[k];
            n.grad = Tensor<T>();
        }
    }

    size_t size() const { return nodes_.size(); }

    /// Gradient left on a leaf after backward() (empty if none flowed).
    const Tensor<T>& grad_of(Value v) const { return node(v.id).grad; }

private:
    std::deque<Node> nodes_;
    std::vector<std::pair<int, Param<T>*>> bindings_;
};

}  // namespace semidrd
