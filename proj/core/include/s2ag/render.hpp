// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "s2ag/skeleton.hpp"

namespace s2ag {

struct RenderOptions {
  int width = 400;
  int height = 400;
  double margin_mm = 100.0;
  double stroke = 6.0;
};

/// Front view (x right, y up) of one frame. The viewport is the bounding box
/// of the whole sequence, so it does not move between frames.
std::string render_frame_svg(const PoseSequence& pose, std::size_t frame, const Skeleton& skel,
                             const RenderOptions& opts = {});

/// Writes frame_0000.svg ... and index.html into `dir`; returns the frame count.
std::size_t render_sequence(const PoseSequence& pose, const std::filesystem::path& dir, const Skeleton& skel,
                            const RenderOptions& opts = {});

/// JSON pose file: {"fps", "frames", "joints", "positions": [[30 values per frame]...]}.
void save_pose(const std::filesystem::path& path, const PoseSequence& pose);
PoseSequence load_pose(const std::filesystem::path& path);

}  // namespace s2ag
