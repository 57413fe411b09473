// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace s2ag {

using Vec3 = std::array<double, 3>;

inline constexpr std::size_t kNumJoints = 10;
inline constexpr std::size_t kNumEdges = 9;
inline constexpr std::size_t kNumBodyParts = 3;

enum class BodyPart { Trunk = 0, LeftArm = 1, RightArm = 2 };

struct Edge {
  std::size_t source;
  std::size_t destination;
  BodyPart part;
};

/// Upper-body pose graph: 10 joints, 9 edges directed away from joint 0.
class Skeleton {
 public:
  /// Validates that `edges` form a tree rooted at joint 0 with exactly three
  /// edges per body part. Throws ConfigInvalid otherwise.
  Skeleton(std::vector<std::string> joints, std::vector<Edge> edges, std::vector<double> bone_lengths);

  /// The canonical ten-joint layout: root, spine, neck, head, then the left
  /// and right shoulder/elbow/wrist chains.
  static Skeleton upper_body(std::span<const double> bone_lengths);
  static Skeleton upper_body();  // default adult proportions, mm

  const std::vector<std::string>& joints() const { return joints_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<double>& bone_lengths() const { return bone_lengths_; }

  /// Edge indices sorted so every edge's source is placed before it is used.
  const std::vector<std::size_t>& topological_order() const { return topo_; }

  /// Edge indices of one body part, in ascending order.
  std::vector<std::size_t> part_edges(BodyPart part) const;

 private:
  std::vector<std::string> joints_;
  std::vector<Edge> edges_;
  std::vector<double> bone_lengths_;
  std::vector<std::size_t> topo_;
};

const std::vector<double>& default_bone_lengths();

struct PoseSequence {
  std::size_t frames = 0;
  double frame_rate = 15.0;
  std::vector<double> positions;  // frames x 10 x 3, millimeters

  PoseSequence() = default;
  PoseSequence(std::size_t t, double fps) : frames(t), frame_rate(fps), positions(t * kNumJoints * 3, 0.0) {}

  double* joint(std::size_t t, std::size_t j) { return &positions[(t * kNumJoints + j) * 3]; }
  const double* joint(std::size_t t, std::size_t j) const { return &positions[(t * kNumJoints + j) * 3]; }

  /// Frames [begin, begin + count).
  PoseSequence slice(std::size_t begin, std::size_t count) const;

  /// Throws ShapeMismatch / NonFinite when the layout or values are invalid.
  void validate() const;
  bool operator==(const PoseSequence&) const = default;
};

struct EdgeDirectionSequence {
  std::size_t frames = 0;
  std::vector<double> directions;  // frames x 9 x 3

  EdgeDirectionSequence() = default;
  explicit EdgeDirectionSequence(std::size_t t) : frames(t), directions(t * kNumEdges * 3, 0.0) {}

  double* edge(std::size_t t, std::size_t e) { return &directions[(t * kNumEdges + e) * 3]; }
  const double* edge(std::size_t t, std::size_t e) const { return &directions[(t * kNumEdges + e) * 3]; }

  /// True when every 3-vector has norm within `tol` of 1.
  bool is_unit(double tol = 1e-6) const;
  bool operator==(const EdgeDirectionSequence&) const = default;
};

EdgeDirectionSequence to_edge_directions(const PoseSequence& pose, const Skeleton& skel);

/// Places every joint from the root outwards, scaling each (possibly
/// unnormalized) edge vector to its bone length. `root_positions` holds one
/// position per frame, or a single position used for all frames.
PoseSequence reconstruct_positions(const EdgeDirectionSequence& dirs, const Skeleton& skel,
                                   std::span<const Vec3> root_positions, double frame_rate = 15.0);

std::vector<Vec3> root_trajectory(const PoseSequence& pose);

/// Neutral standing pose: trunk vertical, arms hanging slightly away from the body.
EdgeDirectionSequence rest_directions(std::size_t frames);

}  // namespace s2ag
