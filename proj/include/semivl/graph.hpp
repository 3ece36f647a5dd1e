#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "semivl/tensor.hpp"

namespace semivl {

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  /// Invalidated by any later op on the same graph.
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Tape of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the record is topologically
/// sorted by construction. backward() may run once per graph.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Appends an op result. The backward closure is kept only if some input tracks gradients.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient of the last backward() loss w.r.t. v; zeros if v did not participate.
  const Tensor& grad(Var v);

  /// Accumulation buffer used by op backward closures; allocated on first use.
  Tensor& grad_buffer(std::size_t id);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owner(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace semivl
