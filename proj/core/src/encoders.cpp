// SPDX-License-Identifier: Apache-2.0
#include "s2ag/encoders.hpp"

#include <queue>

#include "s2ag/error.hpp"
#include "s2ag/features.hpp"

namespace s2ag {

using namespace diff;

namespace {

void expect_rank(const Var& x, std::size_t rank, const char* who) {
  if (x.shape().size() != rank) {
    throw Error(ErrorCode::ShapeMismatch, std::string(who) + ": unexpected input shape " + shape_str(x.shape()));
  }
}

}  // namespace

AdjacencySpec build_adjacency(const Skeleton& skel) {
  const auto& edges = skel.edges();
  const std::size_t n = edges.size();
  AdjacencySpec spec;
  spec.level1 = Tensor({n, n});
  auto touches = [&](std::size_t a, std::size_t b) {
    const Edge& x = edges[a];
    const Edge& y = edges[b];
    return x.source == y.source || x.source == y.destination || x.destination == y.source ||
           x.destination == y.destination;
  };
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<int> dist(n, -1);
    std::queue<std::size_t> q;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v = 0; v < n; ++v) {
        if (dist[v] < 0 && touches(u, v)) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (dist[v] == 1 || dist[v] == 2) spec.level1[s * n + v] = 1.0;
    }
  }
  spec.level2 = Tensor({kNumBodyParts, kNumBodyParts});
  const auto trunk = static_cast<std::size_t>(BodyPart::Trunk);
  for (std::size_t p = 0; p < kNumBodyParts; ++p) {
    if (p == trunk) continue;
    spec.level2[trunk * kNumBodyParts + p] = 1.0;
    spec.level2[p * kNumBodyParts + trunk] = 1.0;
  }
  return spec;
}

Tensor interpolation_matrix(std::size_t out, std::size_t in) {
  if (out == 0 || in == 0) throw Error(ErrorCode::ShapeMismatch, "interpolation_matrix: empty axis");
  Tensor m({out, in});
  for (std::size_t i = 0; i < out; ++i) {
    const double pos = out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 < in && frac > 0.0) {
      m[i * in + lo] = 1.0 - frac;
      m[i * in + lo + 1] = frac;
    } else {
      m[i * in + std::min(lo, in - 1)] = 1.0;
    }
  }
  return m;
}

MfccEncoder::MfccEncoder(ParameterSet& ps, const std::string& prefix, std::size_t columns, std::size_t frames,
                         std::size_t out_dim, Rng& rng)
    : frames_(frames) {
  std::size_t length = columns, in = kMfccRows;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t stride = length / 2 >= frames ? 2 : 1;
    convs_.emplace_back(ps, prefix + ".conv" + std::to_string(i), in, kMfccConvChannels, 3, stride, 1, rng);
    length = (length - 1) / stride + 1;
    in = kMfccConvChannels;
  }
  fc_ = LinearLayer(ps, prefix + ".fc", kMfccConvChannels, out_dim, rng);
}

Var MfccEncoder::operator()(Var mfcc) const {
  expect_rank(mfcc, 3, "encode_mfcc");
  if (mfcc.dim(2) != kMfccRows) throw Error(ErrorCode::ShapeMismatch, "encode_mfcc: expected 37 MFCC rows");
  Var h = mfcc;
  for (const auto& conv : convs_) h = leaky_relu(conv(h));
  if (h.dim(1) != frames_) h = mix_axis(h, interpolation_matrix(frames_, h.dim(1)), 1);
  return fc_(h);
}

RawAudioEncoder::RawAudioEncoder(ParameterSet& ps, const std::string& prefix, std::size_t frames, std::size_t out_dim,
                                 Rng& rng)
    : frames_(frames) {
  const std::size_t channels[] = {1, 16, 32, 64, out_dim};
  const std::size_t strides[] = {5, 6, 6, 6};
  for (std::size_t i = 0; i < 4; ++i) {
    convs_.emplace_back(ps, prefix + ".conv" + std::to_string(i), channels[i], channels[i + 1], 15, strides[i], 7, rng);
  }
}

Var RawAudioEncoder::operator()(Var audio) const {
  expect_rank(audio, 3, "encode_raw_audio");
  Var h = audio;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i + 1 < convs_.size()) h = leaky_relu(h);
  }
  if (h.dim(1) != frames_) h = mix_axis(h, interpolation_matrix(frames_, h.dim(1)), 1);
  return h;
}

TextEncoder::TextEncoder(ParameterSet& ps, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
                         Rng& rng) {
  for (std::size_t i = 0; i < 4; ++i) {
    convs_.emplace_back(ps, prefix + ".conv" + std::to_string(i), i == 0 ? in_dim : out_dim, out_dim, 3, 1, 1, rng);
  }
}

Var TextEncoder::operator()(Var text) const {
  expect_rank(text, 3, "encode_text");
  Var h = text;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i + 1 < convs_.size()) h = leaky_relu(h);
  }
  return h;
}

SpeakerEncoder::SpeakerEncoder(ParameterSet& ps, const std::string& prefix, std::size_t speakers, std::size_t out_dim,
                               Rng& rng)
    : mu1_(ps, prefix + ".mu.fc0", speakers, out_dim, rng),
      mu2_(ps, prefix + ".mu.fc1", out_dim, out_dim, rng),
      var1_(ps, prefix + ".logvar.fc0", speakers, out_dim, rng),
      var2_(ps, prefix + ".logvar.fc1", out_dim, out_dim, rng) {}

StyleDistribution SpeakerEncoder::operator()(Var one_hot) const {
  expect_rank(one_hot, 2, "encode_speaker");
  return {mu2_(leaky_relu(mu1_(one_hot))), clamp(var2_(leaky_relu(var1_(one_hot))), kLogVarMin, kLogVarMax)};
}

Var sample_style(const StyleDistribution& dist, const Tensor& noise, std::size_t frames) {
  if (noise.shape() != dist.mean.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "sample_style: noise shape " + shape_str(noise.shape()) + " vs " +
                                              shape_str(dist.mean.shape()));
  }
  Graph& g = dist.mean.graph();
  const Var z = add(dist.mean, mul(exp(scale(dist.log_var, 0.5)), g.constant(noise)));
  return repeat_time(z, frames);
}

AffectiveEncoder::AffectiveEncoder(ParameterSet& ps, const std::string& prefix, const AdjacencySpec& adj,
                                   const EncoderDims& dims, Rng& rng)
    : norm1_(normalized_adjacency(adj.level1)),
      norm2_(normalized_adjacency(adj.level2)),
      stgcn1_(ps, prefix + ".stgcn1", 3, dims.affective_level1, rng),
      stgcn2_(ps, prefix + ".stgcn2", 3 * dims.affective_level1, dims.affective_level2, rng),
      aff1_(ps, prefix + ".conv0", kNumBodyParts * dims.affective_level2, dims.affective, 3, 1, 1, rng),
      aff2_(ps, prefix + ".conv1", dims.affective, dims.affective, 3, 1, 1, rng),
      d1_(dims.affective_level1),
      d2_(dims.affective_level2) {}

Var AffectiveEncoder::edge_features(Var directions) const {
  expect_rank(directions, 4, "encode_affective");
  if (directions.dim(2) != kNumEdges || directions.dim(3) != 3) {
    throw Error(ErrorCode::ShapeMismatch, "encode_affective: expected [B, T, 9, 3], got " + shape_str(directions.shape()));
  }
  return leaky_relu(stgcn1_(directions, norm1_));
}

Var AffectiveEncoder::part_features(Var directions) const {
  const Var e = edge_features(directions);
  // Edges of each body part are contiguous, so grouping them into channels is a pure reshape.
  const Var parts = reshape(e, {e.dim(0), e.dim(1), kNumBodyParts, 3 * d1_});
  return leaky_relu(stgcn2_(parts, norm2_));
}

Var AffectiveEncoder::operator()(Var directions) const {
  const Var p = part_features(directions);
  const Var flat = reshape(p, {p.dim(0), p.dim(1), kNumBodyParts * d2_});
  return aff2_(leaky_relu(aff1_(flat)));
}

}  // namespace s2ag
