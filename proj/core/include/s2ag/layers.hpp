// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "s2ag/ops.hpp"
#include "s2ag/random.hpp"

namespace s2ag::diff {

// Parameter-owning wrappers around the operators. Each registers its tensors
// in a ParameterSet under "<prefix>.<name>" and binds them on every call.

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(Var x) const;
  Parameter& weight() const { return *w_; }
  Parameter& bias() const { return *b_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, std::size_t kernel,
              std::size_t stride, std::size_t padding, Rng& rng);
  Var operator()(Var x) const;
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }
  std::size_t kernel() const { return kernel_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  std::size_t kernel_ = 1, stride_ = 1, padding_ = 0;
};

class BiGruLayer {
 public:
  BiGruLayer() = default;
  BiGruLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);
  /// Forward and backward channel outputs, each [B, T, hidden].
  std::pair<Var, Var> operator()(Var x) const;
  std::size_t hidden() const { return hidden_; }

 private:
  struct Direction {
    Parameter *w_ih, *w_hh, *b_ih, *b_hh;
  };
  GruWeights bind(Graph& g, const Direction& d) const;
  Direction fwd_{}, bwd_{};
  std::size_t hidden_ = 0;
};

class GraphConvLayer {
 public:
  GraphConvLayer() = default;
  GraphConvLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(Var x, const Tensor& norm_adjacency) const;

 private:
  Parameter *cw_ = nullptr, *cb_ = nullptr, *tw_ = nullptr, *tb_ = nullptr;
};

}  // namespace s2ag::diff
