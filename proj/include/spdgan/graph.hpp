#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "spdgan/param.hpp"
#include "spdgan/tensor.hpp"

namespace spdgan {

template <typename Scalar>
class Graph;

/// Handle to a value recorded on a Graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  Graph<Scalar>* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor4<Scalar>& value() const { return graph_->value(*this); }
  const Shape4& shape() const { return value().shape(); }
  bool requires_grad() const { return graph_->requires_grad(*this); }
  const Tensor4<Scalar>& grad() const { return graph_->grad(*this); }

  /// Scalar value of a single-element tensor.
  Scalar item() const {
    if (value().size() != 1) throw DimensionError("item() on non-scalar tensor " + shape().str());
    return value()[0];
  }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

/// Tape-based reverse-mode recorder. Nodes are appended in evaluation order,
/// so reverse insertion order is a valid reverse topological order. Each op
/// supplies a closure that adds its input gradients given its output gradient.
template <typename Scalar>
class Graph {
 public:
  using Tensor = Tensor4<Scalar>;
  using BackwardFn = std::function<void(const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> input(Tensor value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr, {}, nullptr);
  }

  /// Leaf bound to a parameter; its gradient is added to p.grad by backward().
  Var<Scalar> param(Param<Scalar>& p) {
    return push(p.value, p.trainable, p.trainable ? &p : nullptr, {}, nullptr);
  }

  /// Leaf holding a parameter's value without gradient tracking.
  Var<Scalar> frozen(const Param<Scalar>& p) { return push(p.value, false, nullptr, {}, nullptr); }

  /// Records an op output. The closure is dropped when no input needs a
  /// gradient.
  Var<Scalar> record(Tensor value, std::initializer_list<Var<Scalar>> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<Scalar>>(inputs), std::move(fn));
  }

  Var<Scalar> record(Tensor value, const std::vector<Var<Scalar>>& inputs, BackwardFn fn) {
    bool needs = false;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    const int next = static_cast<int>(nodes_.size());
    for (const auto& v : inputs) {
      if (v.graph() != this) throw InternalError("op input recorded on a different graph");
      if (v.id() < 0 || v.id() >= next)
        throw InternalError("op input does not precede its output; recorded graph has a cycle");
      needs = needs || nodes_[v.id()].requires_grad;
      ids.push_back(v.id());
    }
    return push(std::move(value), needs, nullptr, std::move(ids), needs ? std::move(fn) : nullptr);
  }

  const Tensor& value(Var<Scalar> v) const { return node(v).value; }
  bool requires_grad(Var<Scalar> v) const { return node(v).requires_grad; }

  const Tensor& grad(Var<Scalar> v) const {
    const auto& nd = node(v);
    if (!nd.has_grad) throw InternalError("no gradient has been propagated to this value");
    return nd.grad;
  }
  bool has_grad(Var<Scalar> v) const { return node(v).has_grad; }

  /// Mutable gradient buffer of v (zero-initialised on first access).
  Tensor& grad_buffer(Var<Scalar> v) {
    auto& nd = node(v);
    if (!nd.has_grad) {
      nd.grad = Tensor(nd.value.shape());
      nd.has_grad = true;
    }
    return nd.grad;
  }

  void accumulate(Var<Scalar> v, const Tensor& g) {
    if (!requires_grad(v)) return;
    auto& buf = grad_buffer(v);
    require_same_shape(buf, g, "gradient accumulation");
    buf.array() += g.array();
  }

  /// Backpropagates from a single-element root with seed gradient 1.
  void backward(Var<Scalar> root) {
    if (value(root).size() != 1)
      throw DimensionError("backward() without seed requires a scalar root, got " +
                           value(root).shape().str());
    backward(root, Tensor(value(root).shape(), Scalar(1)));
  }

  void backward(Var<Scalar> root, const Tensor& seed) {
    require_same_shape(value(root), seed, "backward seed");
    if (!requires_grad(root)) return;
    grad_buffer(root).array() += seed.array();
    for (int i = root.id(); i >= 0; --i) {
      auto& nd = nodes_[i];
      if (!nd.has_grad || !nd.requires_grad) continue;
      if (nd.backward) nd.backward(nd.grad);
    }
    for (int i = 0; i <= root.id(); ++i) {
      auto& nd = nodes_[i];
      if (nd.param && nd.has_grad) nd.param->grad.array() += nd.grad.array();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Param<Scalar>* param = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  Var<Scalar> push(Tensor value, bool requires_grad, Param<Scalar>* p, std::vector<int> inputs,
                   BackwardFn fn) {
    Node nd;
    nd.value = std::move(value);
    nd.requires_grad = requires_grad;
    nd.param = p;
    nd.inputs = std::move(inputs);
    nd.backward = std::move(fn);
    nodes_.push_back(std::move(nd));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Node& node(Var<Scalar> v) const {
    if (v.graph() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size()))
      throw InternalError("value handle does not belong to this graph");
    return nodes_[v.id()];
  }
  Node& node(Var<Scalar> v) {
    if (v.graph() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size()))
      throw InternalError("value handle does not belong to this graph");
    return nodes_[v.id()];
  }

  std::vector<Node> nodes_;
};

}  // namespace spdgan
