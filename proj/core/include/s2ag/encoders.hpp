// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s2ag/layers.hpp"
#include "s2ag/skeleton.hpp"

namespace s2ag {

// Latent widths of the encoders and recurrent blocks.
struct EncoderDims {
  std::size_t mfcc = 32;
  std::size_t text = 32;
  std::size_t style = 16;
  std::size_t affective_level1 = 16;
  std::size_t affective_level2 = 16;
  std::size_t affective = 16;
  std::size_t generator_hidden = 150;
  std::size_t discriminator_hidden = 150;
};

inline constexpr std::size_t kMfccConvChannels = 64;
inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 2.0;

struct AdjacencySpec {
  diff::Tensor level1;  // [9, 9] binary, zero diagonal
  diff::Tensor level2;  // [3, 3] binary, zero diagonal
  std::size_t temporal_window = diff::kTemporalWindow;
};

/// Edge i and j are adjacent at level 1 when their line-graph distance is 1 or 2.
AdjacencySpec build_adjacency(const Skeleton& skel);

/// Linear interpolation matrix [out, in] with aligned end points.
diff::Tensor interpolation_matrix(std::size_t out, std::size_t in);

// MFCC features [B, M, 37] -> [B, T, D_m].
class MfccEncoder {
 public:
  MfccEncoder() = default;
  MfccEncoder(diff::ParameterSet& ps, const std::string& prefix, std::size_t columns, std::size_t frames,
              std::size_t out_dim, Rng& rng);
  diff::Var operator()(diff::Var mfcc) const;

 private:
  std::vector<diff::Conv1dLayer> convs_;
  diff::LinearLayer fc_;
  std::size_t frames_ = 0;
};

// Raw waveform [B, L, 1] -> [B, T, D_m]; stands in for the MFCC encoder in the ablation.
class RawAudioEncoder {
 public:
  RawAudioEncoder() = default;
  RawAudioEncoder(diff::ParameterSet& ps, const std::string& prefix, std::size_t frames, std::size_t out_dim, Rng& rng);
  diff::Var operator()(diff::Var audio) const;

 private:
  std::vector<diff::Conv1dLayer> convs_;
  std::size_t frames_ = 0;
};

// Word vectors [B, T, 300] -> [B, T, D_x].
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(diff::ParameterSet& ps, const std::string& prefix, std::size_t in_dim, std::size_t out_dim, Rng& rng);
  diff::Var operator()(diff::Var text) const;

 private:
  std::vector<diff::Conv1dLayer> convs_;
};

struct StyleDistribution {
  diff::Var mean;     // [B, D_s]
  diff::Var log_var;  // [B, D_s], clamped
};

// Speaker one-hot [B, S] -> mean and diagonal log-variance.
class SpeakerEncoder {
 public:
  SpeakerEncoder() = default;
  SpeakerEncoder(diff::ParameterSet& ps, const std::string& prefix, std::size_t speakers, std::size_t out_dim,
                 Rng& rng);
  StyleDistribution operator()(diff::Var one_hot) const;

 private:
  diff::LinearLayer mu1_, mu2_, var1_, var2_;
};

/// Reparameterized style, one noise draw per sequence tiled over T: [B, T, D_s].
diff::Var sample_style(const StyleDistribution& dist, const diff::Tensor& noise, std::size_t frames);

// Edge directions [B, T, 9, 3] -> [B, T, D_a].
class AffectiveEncoder {
 public:
  AffectiveEncoder() = default;
  AffectiveEncoder(diff::ParameterSet& ps, const std::string& prefix, const AdjacencySpec& adj, const EncoderDims& dims,
                   Rng& rng);
  diff::Var operator()(diff::Var directions) const;
  /// Level-1 output [B, T, 9, D_a1].
  diff::Var edge_features(diff::Var directions) const;
  /// Level-2 output [B, T, 3, D_a2], before the temporal conv stack.
  diff::Var part_features(diff::Var directions) const;

 private:
  diff::Tensor norm1_, norm2_;
  diff::GraphConvLayer stgcn1_, stgcn2_;
  diff::Conv1dLayer aff1_, aff2_;
  std::size_t d1_ = 0, d2_ = 0;
};

}  // namespace s2ag
