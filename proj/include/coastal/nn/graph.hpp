#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "coastal/nn/tensor.hpp"

namespace coastal::nn {

template <class T>
class Tape;

/// One value in the computation graph. Interior nodes free their storage
/// during the backward sweep once no longer needed.
template <class T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated lazily
    bool needs_grad = false;
    bool is_leaf = false;
    std::vector<Node*> parents;
    std::function<void(Node&)> back;  // pushes this->grad into parents
    Tape<T>* tape = nullptr;

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(val.shape);
        return grad;
    }
};

/// Dynamic tape: node creation order is a valid topological order, so the
/// backward pass is a single reverse sweep.
template <class T>
class Tape {
public:
    Node<T>* leaf(Tensor<T> val, bool needs_grad) {
        Node<T>* n = alloc();
        n->val = std::move(val);
        n->needs_grad = needs_grad;
        n->is_leaf = true;
        return n;
    }

    Node<T>* constant(Tensor<T> val) { return leaf(std::move(val), false); }

    Node<T>* make(Tensor<T> val, std::vector<Node<T>*> parents, std::function<void(Node<T>&)> back) {
        Node<T>* n = alloc();
        n->val = std::move(val);
        n->parents = std::move(parents);
        n->back = std::move(back);
        for (Node<T>* p : n->parents)
            if (p->needs_grad) n->needs_grad = true;
        return n;
    }

    /// Backpropagates from a scalar root. Leaf gradients accumulate into
    /// Node::grad; everything interior is released on the way down.
    void backward(Node<T>* root) {
        if (root->val.size() != 1) throw ConfigError("backward requires a scalar root");
        root->ensure_grad().v[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* n = it->get();
            if (n->needs_grad && !n->grad.empty() && n->back) n->back(*n);
            if (!n->is_leaf) {
                n->val.release();
                n->grad.release();
            }
        }
    }

    size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

private:
    Node<T>* alloc() {
        nodes_.push_back(std::make_unique<Node<T>>());
        nodes_.back()->tape = this;
        return nodes_.back().get();
    }

    std::vector<std::unique_ptr<Node<T>>> nodes_;
};

}  // namespace coastal::nn
