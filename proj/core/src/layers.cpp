// SPDX-License-Identifier: Apache-2.0
#include "s2ag/layers.hpp"

namespace s2ag::diff {

LinearLayer::LinearLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
    : w_(&ps.add(prefix + ".weight", Tensor::xavier({out, in}, in, out, rng))),
      b_(&ps.add(prefix + ".bias", Tensor({out}))) {}

Var LinearLayer::operator()(Var x) const {
  Graph& g = x.graph();
  return linear(x, g.parameter(*w_), g.parameter(*b_));
}

Conv1dLayer::Conv1dLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out,
                         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng)
    : w_(&ps.add(prefix + ".weight", Tensor::xavier({out, kernel, in}, kernel * in, kernel * out, rng))),
      b_(&ps.add(prefix + ".bias", Tensor({out}))),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {}

Var Conv1dLayer::operator()(Var x) const {
  Graph& g = x.graph();
  return conv1d(x, g.parameter(*w_), g.parameter(*b_), stride_, padding_);
}

BiGruLayer::BiGruLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng)
    : hidden_(hidden) {
  auto make = [&](const std::string& dir) {
    Direction d{};
    d.w_ih = &ps.add(prefix + "." + dir + ".w_ih", Tensor::xavier({3 * hidden, in}, in, 3 * hidden, rng));
    d.w_hh = &ps.add(prefix + "." + dir + ".w_hh", Tensor::xavier({3 * hidden, hidden}, hidden, 3 * hidden, rng));
    d.b_ih = &ps.add(prefix + "." + dir + ".b_ih", Tensor({3 * hidden}));
    d.b_hh = &ps.add(prefix + "." + dir + ".b_hh", Tensor({3 * hidden}));
    return d;
  };
  fwd_ = make("fwd");
  bwd_ = make("bwd");
}

GruWeights BiGruLayer::bind(Graph& g, const Direction& d) const {
  return {g.parameter(*d.w_ih), g.parameter(*d.w_hh), g.parameter(*d.b_ih), g.parameter(*d.b_hh)};
}

std::pair<Var, Var> BiGruLayer::operator()(Var x) const {
  Graph& g = x.graph();
  return gru_bidirectional(x, bind(g, fwd_), bind(g, bwd_));
}

GraphConvLayer::GraphConvLayer(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
    : cw_(&ps.add(prefix + ".channel.weight", Tensor::xavier({out, in}, in, out, rng))),
      cb_(&ps.add(prefix + ".channel.bias", Tensor({out}))),
      tw_(&ps.add(prefix + ".temporal.weight",
                  Tensor::xavier({out, kTemporalWindow, out}, kTemporalWindow * out, kTemporalWindow * out, rng))),
      tb_(&ps.add(prefix + ".temporal.bias", Tensor({out}))) {}

Var GraphConvLayer::operator()(Var x, const Tensor& norm_adjacency) const {
  Graph& g = x.graph();
  return graph_conv(x, norm_adjacency, {g.parameter(*cw_), g.parameter(*cb_), g.parameter(*tw_), g.parameter(*tb_)});
}

}  // namespace s2ag::diff
