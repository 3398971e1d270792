#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dda/tensor.hpp"

namespace dda {

template <class Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; invalid when id < 0.
template <class Scalar>
struct Var {
    int id = -1;
    Tape<Scalar>* tape = nullptr;

    bool valid() const { return id >= 0; }
    const Tensor<Scalar>& value() const { return tape->val(id); }
    const Shape& shape() const { return value().shape; }
};

/// Dynamic reverse-mode tape over NCHW tensors. Ops append nodes with a
/// backward closure; backward() walks the tape once in reverse. Parameters
/// leased with param()/constant() are keyed by address so repeated use of a
/// shared sub-network accumulates into a single gradient. Node storage is a
/// deque: references returned by val()/grad() stay valid while further nodes
/// are appended.
template <class Scalar>
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, false});
        return {int(nodes_.size() - 1), this};
    }

    /// Lease a trainable parameter. Gradients are read back via grad_for().
    Var<Scalar> param(Tensor<Scalar>& storage) { return lease(&storage, storage, true); }

    /// Lease a frozen tensor (tracked as read, never differentiated).
    Var<Scalar> constant(const Tensor<Scalar>& storage) {
        return lease(&storage, storage, false);
    }

    /// Append an op node. `backward(self)` receives the node's own id and
    /// accumulates into parent gradients; it is dropped entirely when no
    /// parent requires gradients.
    template <class Fn>
    Var<Scalar> make(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents,
                     Fn&& backward) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || (p.valid() && nodes_[p.id].requires_grad);
        nodes_.push_back(Node{std::move(value), {}, {}, rg, false});
        if (rg) nodes_.back().backward = std::forward<Fn>(backward);
        return {int(nodes_.size() - 1), this};
    }

    const Tensor<Scalar>& val(int id) const { return nodes_[id].value; }
    const Tensor<Scalar>& val(Var<Scalar> v) const { return nodes_[v.id].value; }

    bool requires_grad(int id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer of a node, allocated as zeros on first touch.
    Tensor<Scalar>& grad(int id) {
        Node& n = nodes_[id];
        if (!n.grad_ready) {
            n.grad = Tensor<Scalar>::zeros(n.value.shape);
            n.grad_ready = true;
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[id].grad_ready; }

    /// Accumulate into a parent's gradient; no-op when the parent does not
    /// require gradients.
    template <class Expr>
    void add_grad(int id, const Expr& e) {
        if (!nodes_[id].requires_grad) return;
        grad(id).v += e;
    }

    void backward(Var<Scalar> root) {
        if (!root.valid() || root.tape != this) throw Error("backward: invalid root");
        if (nodes_[root.id].value.size() != 1)
            throw ShapeError("backward: root must be a scalar, got " +
                             nodes_[root.id].value.shape.str());
        grad(root.id).v[0] += Scalar(1);
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.grad_ready && n.backward) n.backward(i);
        }
    }

    bool touched(const void* storage) const { return leases_.count(storage) > 0; }

    /// Gradient for a leased tensor, or nullptr when it never received one.
    const Tensor<Scalar>* grad_for(const Tensor<Scalar>* storage) const {
        auto it = leases_.find(storage);
        if (it == leases_.end()) return nullptr;
        const Node& n = nodes_[it->second];
        return n.grad_ready ? &n.grad : nullptr;
    }

    std::vector<const void*> touched_storages() const {
        std::vector<const void*> out;
        out.reserve(leases_.size());
        for (const auto& [ptr, id] : leases_) out.push_back(ptr);
        return out;
    }

    std::size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor<Scalar> value;
        Tensor<Scalar> grad;
        std::function<void(int)> backward;
        bool requires_grad = false;
        bool grad_ready = false;
    };

    Var<Scalar> lease(const void* key, const Tensor<Scalar>& storage, bool requires_grad) {
        auto it = leases_.find(key);
        if (it != leases_.end()) return {it->second, this};
        Var<Scalar> v = leaf(storage, requires_grad);
        leases_.emplace(key, v.id);
        return v;
    }

    std::deque<Node> nodes_;
    std::unordered_map<const void*, int> leases_;
};

} // namespace dda
