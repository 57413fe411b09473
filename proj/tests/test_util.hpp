// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "s2ag/random.hpp"
#include "s2ag/skeleton.hpp"

namespace s2ag::test {

/// A random pose with bones no shorter than 1 mm.
inline PoseSequence random_pose(Rng& rng, std::size_t frames) {
  PoseSequence p(frames, 15.0);
  for (double& v : p.positions) v = rng.uniform(-500.0, 500.0);
  return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("s2ag_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace s2ag::test
