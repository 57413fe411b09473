// SPDX-License-Identifier: Apache-2.0
#include "s2ag/autodiff.hpp"

#include <cassert>

#include "s2ag/error.hpp"

namespace s2ag::diff {

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw Error(ErrorCode::NonFinite, "constant input contains non-finite values");
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw Error(ErrorCode::NonFinite, "parameter " + p.name + " is non-finite");
  Node n;
  n.op = "parameter";
  n.value = p.value;
  if (!frozen_.contains(&p)) {
    n.param = &p;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

void Graph::freeze(ParameterSet& set) {
  set.for_each([this](Parameter& p) { frozen_.insert(&p); });
}

Var Graph::emit(const char* op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw Error(ErrorCode::NonFinite, std::string("operator ") + op + " produced non-finite values");
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const Var& v : parents) {
    if (&v.graph() != this) throw Error(ErrorCode::ShapeMismatch, "operand belongs to a different graph");
    if (v.id() >= nodes_.size()) throw Error(ErrorCode::GraphCycle, "operand recorded after its consumer");
    n.parents.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor* Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Graph::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  Tensor* seed = grad(loss.id());
  if (seed == nullptr) return;
  (*seed)[0] += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    for (std::size_t p : n.parents) {
      assert(p < id);
      (void)p;
    }
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (!n.grad.all_finite()) throw Error(ErrorCode::NonFinite, "gradient of " + n.param->name + " is non-finite");
      double* dst = n.param->grad.data();
      const double* src = n.grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
    }
  }
}

}  // namespace s2ag::diff
