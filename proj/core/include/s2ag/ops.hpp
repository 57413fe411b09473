// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable operators. Sequences use a batch-major, channel-last layout:
// [batch, time, channels] or, for graph features, [batch, time, nodes, channels].

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "s2ag/autodiff.hpp"

namespace s2ag::diff {

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var leaky_relu(Var x, double slope = 0.2);
Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var abs(Var x);
Var square(Var x);
/// Values outside [lo, hi] are clamped and pass no gradient.
Var clamp(Var x, double lo, double hi);
/// Elementwise Huber function: e^2/2 for |e| <= delta, delta(|e| - delta/2) beyond.
Var huber(Var x, double delta);

// Reductions.
Var sum(Var x);
Var mean(Var x);
/// Sums over every axis but the first: [B, ...] -> [B].
Var sum_per_item(Var x);

/// Elementwise a / b for same-shape operands.
Var div(Var a, Var b);

// Shape manipulation.
Var reshape(Var x, Shape shape);
/// Concatenates along the last axis; leading dimensions must agree.
Var concat_last(std::span<const Var> parts);
/// [B, C] -> [B, T, C]
Var repeat_time(Var x, std::size_t frames);
/// [B, T, C] -> [B, C] at time `t`.
Var select_time(Var x, std::size_t t);
/// Reorders axis 0: out[i] = x[order[i]].
Var gather_items(Var x, std::span<const std::size_t> order);
/// Normalizes consecutive groups of `group` values along the last axis to unit
/// Euclidean norm (with `eps` added to the norm).
Var normalize_groups(Var x, std::size_t group, double eps = 1e-8);
/// Mean over axis 1: [B, T, C] -> [B, C].
Var mean_time(Var x);
Var detach(Var x);

// Layers.
/// y = x W^T + b over the last axis. x: [..., in], w: [out, in], b: [out].
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

/// Cross-correlation along axis 1. x: [B, T, C] or [B, T, N, C] (nodes share
/// weights), w: [out, kernel, in], b: [out].
Var conv1d(Var x, Var w, Var b, std::size_t stride = 1, std::size_t padding = 0);

/// Linear mixing along `axis` with a constant matrix m: [out_len, in_len].
Var mix_axis(Var x, const Tensor& m, std::size_t axis);

/// Degree-normalized adjacency D^-1/2 (A + I) D^-1/2.
Tensor normalized_adjacency(const Tensor& adjacency);

struct GraphConvWeights {
  Var channel_w;   // [out, in]
  Var channel_b;   // [out]
  Var temporal_w;  // [out, 5, out]
  Var temporal_b;  // [out]
};

inline constexpr std::size_t kTemporalWindow = 5;

/// Spatial-temporal graph convolution on x: [B, T, N, in]. Each frame is
/// aggregated over `norm_adjacency` (N x N, already normalized), mapped to
/// `out` channels, then convolved over time with a width-5 kernel, padding 2.
Var graph_conv(Var x, const Tensor& norm_adjacency, const GraphConvWeights& w);

struct GruWeights {
  Var w_ih;  // [3H, in], gate rows ordered reset, update, candidate
  Var w_hh;  // [3H, H]
  Var b_ih;  // [3H]
  Var b_hh;  // [3H]
};

/// Single-direction GRU over axis 1 of x: [B, T, in] -> [B, T, H]. The
/// reversed direction reads t = T-1..0 and writes each output at its own t.
/// `h0` is a constant initial state [B, H]; empty means zeros.
Var gru(Var x, const GruWeights& w, bool reverse, const Tensor& h0 = {});

/// Forward and backward channel outputs, each [B, T, H].
std::pair<Var, Var> gru_bidirectional(Var x, const GruWeights& forward, const GruWeights& backward);

}  // namespace s2ag::diff
