#include "semivl/graph.hpp"

#include <stdexcept>

namespace semivl {

const Tensor& Var::value() const {
  if (graph == nullptr) throw std::logic_error("Var is not bound to a graph");
  return graph->value(*this);
}

void Graph::check_owner(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw std::invalid_argument("Var does not belong to this graph");
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, true, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (backward_done_) throw std::logic_error("cannot record onto a graph after backward()");
  bool tracked = false;
  for (const Var& in : inputs) {
    check_owner(in);
    tracked = tracked || nodes_[in.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, tracked, tracked ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

const Tensor& Graph::grad(Var v) {
  check_owner(v);
  return grad_buffer(v.id);
}

void Graph::backward(Var loss) {
  check_owner(loss);
  if (backward_done_) throw std::logic_error("backward() already ran on this graph; double backward is not supported");
  const Tensor& out = nodes_[loss.id].value;
  if (out.size() != 1) throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(out.shape()));
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

}  // namespace semivl
