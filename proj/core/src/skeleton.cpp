// SPDX-License-Identifier: Apache-2.0
#include "s2ag/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "s2ag/error.hpp"

namespace s2ag {

namespace {

constexpr double kMinBone = 1e-9;

double norm3(const double* v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

Skeleton::Skeleton(std::vector<std::string> joints, std::vector<Edge> edges, std::vector<double> bone_lengths)
    : joints_(std::move(joints)), edges_(std::move(edges)), bone_lengths_(std::move(bone_lengths)) {
  if (joints_.size() != kNumJoints || edges_.size() != kNumEdges || bone_lengths_.size() != kNumEdges) {
    throw Error(ErrorCode::ConfigInvalid, "skeleton needs 10 joints, 9 edges and 9 bone lengths");
  }
  std::array<int, kNumJoints> parents_seen{};
  std::array<int, kNumBodyParts> part_count{};
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.source >= kNumJoints || e.destination >= kNumJoints || e.destination == 0 || e.source == e.destination) {
      throw Error(ErrorCode::ConfigInvalid, "edge " + std::to_string(i) + " has invalid endpoints");
    }
    ++parents_seen[e.destination];
    ++part_count[static_cast<std::size_t>(e.part)];
    if (!(bone_lengths_[i] > 0.0) || !std::isfinite(bone_lengths_[i])) {
      throw Error(ErrorCode::ConfigInvalid, "bone length " + std::to_string(i) + " must be positive");
    }
  }
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    if (parents_seen[j] != 1) {
      throw Error(ErrorCode::ConfigInvalid, "joint " + joints_[j] + " must be the destination of exactly one edge");
    }
  }
  for (int c : part_count) {
    if (c != 3) throw Error(ErrorCode::ConfigInvalid, "each body part needs exactly three edges");
  }

  // Breadth-first from the root; every joint reachable implies a tree.
  std::array<bool, kNumJoints> placed{};
  placed[0] = true;
  std::deque<std::size_t> frontier{0};
  while (!frontier.empty()) {
    const std::size_t joint = frontier.front();
    frontier.pop_front();
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      if (edges_[i].source == joint && !placed[edges_[i].destination]) {
        placed[edges_[i].destination] = true;
        topo_.push_back(i);
        frontier.push_back(edges_[i].destination);
      }
    }
  }
  if (topo_.size() != kNumEdges) {
    throw Error(ErrorCode::ConfigInvalid, "edge graph is not a tree rooted at joint 0");
  }
}

const std::vector<double>& default_bone_lengths() {
  static const std::vector<double> lengths{200.0, 250.0, 150.0, 180.0, 280.0, 250.0, 180.0, 280.0, 250.0};
  return lengths;
}

Skeleton Skeleton::upper_body(std::span<const double> bone_lengths) {
  std::vector<std::string> joints{"root",       "spine",     "neck",        "head",     "l_shoulder",
                                  "l_elbow",    "l_wrist",   "r_shoulder",  "r_elbow",  "r_wrist"};
  std::vector<Edge> edges{
      {0, 1, BodyPart::Trunk},   {1, 2, BodyPart::Trunk},   {2, 3, BodyPart::Trunk},
      {2, 4, BodyPart::LeftArm}, {4, 5, BodyPart::LeftArm}, {5, 6, BodyPart::LeftArm},
      {2, 7, BodyPart::RightArm}, {7, 8, BodyPart::RightArm}, {8, 9, BodyPart::RightArm},
  };
  return Skeleton(std::move(joints), std::move(edges), std::vector<double>(bone_lengths.begin(), bone_lengths.end()));
}

Skeleton Skeleton::upper_body() { return upper_body(default_bone_lengths()); }

std::vector<std::size_t> Skeleton::part_edges(BodyPart part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (edges_[i].part == part) out.push_back(i);
  }
  return out;
}

PoseSequence PoseSequence::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > frames) throw Error(ErrorCode::ShapeMismatch, "pose slice out of range");
  PoseSequence out(count, frame_rate);
  std::copy_n(positions.begin() + static_cast<std::ptrdiff_t>(begin * kNumJoints * 3), count * kNumJoints * 3,
              out.positions.begin());
  return out;
}

void PoseSequence::validate() const {
  if (frames < 1) throw Error(ErrorCode::ShapeMismatch, "pose sequence has no frames");
  if (positions.size() != frames * kNumJoints * 3) {
    throw Error(ErrorCode::ShapeMismatch, "pose sequence must hold frames x 10 x 3 values");
  }
  for (double v : positions) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "pose sequence contains non-finite values");
  }
}

bool EdgeDirectionSequence::is_unit(double tol) const {
  for (std::size_t k = 0; k + 2 < directions.size(); k += 3) {
    if (std::abs(norm3(&directions[k]) - 1.0) > tol) return false;
  }
  return true;
}

EdgeDirectionSequence to_edge_directions(const PoseSequence& pose, const Skeleton& skel) {
  if (pose.positions.size() != pose.frames * kNumJoints * 3) {
    throw Error(ErrorCode::ShapeMismatch, "pose must have exactly 10 joints per frame");
  }
  EdgeDirectionSequence out(pose.frames);
  for (std::size_t t = 0; t < pose.frames; ++t) {
    for (std::size_t i = 0; i < kNumEdges; ++i) {
      const Edge& e = skel.edges()[i];
      const double* src = pose.joint(t, e.source);
      const double* dst = pose.joint(t, e.destination);
      double d[3] = {dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]};
      const double n = norm3(d);
      if (!(n > kMinBone)) {
        throw Error(ErrorCode::DegenerateBone,
                    "frame " + std::to_string(t) + " edge " + std::to_string(i) + " has zero length");
      }
      double* u = out.edge(t, i);
      for (int c = 0; c < 3; ++c) u[c] = d[c] / n;
    }
  }
  return out;
}

PoseSequence reconstruct_positions(const EdgeDirectionSequence& dirs, const Skeleton& skel,
                                   std::span<const Vec3> root_positions, double frame_rate) {
  if (dirs.directions.size() != dirs.frames * kNumEdges * 3) {
    throw Error(ErrorCode::ShapeMismatch, "edge direction sequence must hold frames x 9 x 3 values");
  }
  if (root_positions.size() != dirs.frames && root_positions.size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "need one root position per frame or a single fixed root");
  }
  PoseSequence out(dirs.frames, frame_rate);
  for (std::size_t t = 0; t < dirs.frames; ++t) {
    const Vec3& root = root_positions.size() == 1 ? root_positions[0] : root_positions[t];
    std::copy(root.begin(), root.end(), out.joint(t, 0));
    for (std::size_t i : skel.topological_order()) {
      const Edge& e = skel.edges()[i];
      const double* u = dirs.edge(t, i);
      const double n = norm3(u);
      if (!(n >= kMinBone) || !std::isfinite(n)) {
        throw Error(ErrorCode::ZeroVector,
                    "frame " + std::to_string(t) + " edge " + std::to_string(i) + " cannot be normalized");
      }
      const double scale = skel.bone_lengths()[i] / n;
      const double* src = out.joint(t, e.source);
      double* dst = out.joint(t, e.destination);
      for (int c = 0; c < 3; ++c) dst[c] = src[c] + scale * u[c];
    }
  }
  return out;
}

std::vector<Vec3> root_trajectory(const PoseSequence& pose) {
  std::vector<Vec3> out(pose.frames);
  for (std::size_t t = 0; t < pose.frames; ++t) {
    const double* r = pose.joint(t, 0);
    out[t] = {r[0], r[1], r[2]};
  }
  return out;
}

EdgeDirectionSequence rest_directions(std::size_t frames) {
  static const double kRest[kNumEdges][3] = {
      {0.0, 1.0, 0.0},     {0.0, 1.0, 0.0},    {0.0, 1.0, 0.0},
      {1.0, 0.0, 0.0},     {0.2, -0.98, 0.0},  {0.1, -0.99, 0.1},
      {-1.0, 0.0, 0.0},    {-0.2, -0.98, 0.0}, {-0.1, -0.99, 0.1},
  };
  EdgeDirectionSequence out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t e = 0; e < kNumEdges; ++e) {
      const double n = norm3(kRest[e]);
      for (int c = 0; c < 3; ++c) out.edge(t, e)[c] = kRest[e][c] / n;
    }
  }
  return out;
}

}  // namespace s2ag
