// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "s2ag/tensor.hpp"

namespace s2ag::diff {

class Graph;

/// Handle to a value recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is always a valid topological order for backward().
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);

  /// Records `p` as a leaf. Repeated calls with the same parameter return the
  /// same node. Frozen parameters are recorded as constants.
  Var parameter(Parameter& p);

  /// Parameters of `set` are treated as constants on this graph.
  void freeze(ParameterSet& set);

  /// Records an operation result. `parents` must already be on this graph.
  Var emit(const char* op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// reachable non-frozen Parameter::grad.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, or nullptr if it needs none.
  Tensor* grad(std::size_t id);
  const Tensor& grad_of(Var v) const { return nodes_[v.id()].grad; }
  std::size_t parent(std::size_t id, std::size_t k) const { return nodes_[id].parents[k]; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable references while the graph grows
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::unordered_set<const Parameter*> frozen_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline const Shape& Var::shape() const { return graph_->value(id_).shape(); }

}  // namespace s2ag::diff
