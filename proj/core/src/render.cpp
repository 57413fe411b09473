// SPDX-License-Identifier: Apache-2.0
#include "s2ag/render.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "s2ag/binary_io.hpp"
#include "s2ag/error.hpp"

namespace s2ag {

namespace {

struct Viewport {
  double x0, y0, scale, offset_x, offset_y;
};

Viewport viewport(const PoseSequence& pose, const RenderOptions& opts) {
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (std::size_t t = 0; t < pose.frames; ++t) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double* p = pose.joint(t, j);
      lo_x = std::min(lo_x, p[0]);
      hi_x = std::max(hi_x, p[0]);
      lo_y = std::min(lo_y, p[1]);
      hi_y = std::max(hi_y, p[1]);
    }
  }
  lo_x -= opts.margin_mm;
  hi_x += opts.margin_mm;
  lo_y -= opts.margin_mm;
  hi_y += opts.margin_mm;
  const double span = std::max(hi_x - lo_x, hi_y - lo_y);
  const double scale = std::min(opts.width, opts.height) / span;
  return {lo_x, hi_y, scale, 0.5 * (opts.width - (hi_x - lo_x) * scale), 0.5 * (opts.height - (hi_y - lo_y) * scale)};
}

const char* part_color(BodyPart p) {
  switch (p) {
    case BodyPart::Trunk: return "#3b4a6b";
    case BodyPart::LeftArm: return "#d1495b";
    case BodyPart::RightArm: return "#2e86ab";
  }
  return "#000000";
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_frame_svg(const PoseSequence& pose, std::size_t frame, const Skeleton& skel,
                             const RenderOptions& opts) {
  if (frame >= pose.frames) throw Error(ErrorCode::ShapeMismatch, "frame index past the end of the sequence");
  const Viewport v = viewport(pose, opts);
  auto sx = [&](double x) { return v.offset_x + (x - v.x0) * v.scale; };
  auto sy = [&](double y) { return v.offset_y + (v.y0 - y) * v.scale; };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
      << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#fafafa\"/>\n";
  for (const Edge& e : skel.edges()) {
    const double* a = pose.joint(frame, e.source);
    const double* b = pose.joint(frame, e.destination);
    out << "<line x1=\"" << fixed(sx(a[0])) << "\" y1=\"" << fixed(sy(a[1])) << "\" x2=\"" << fixed(sx(b[0]))
        << "\" y2=\"" << fixed(sy(b[1])) << "\" stroke=\"" << part_color(e.part) << "\" stroke-width=\""
        << fixed(opts.stroke) << "\" stroke-linecap=\"round\"/>\n";
  }
  const double* head = pose.joint(frame, 3);
  out << "<circle cx=\"" << fixed(sx(head[0])) << "\" cy=\"" << fixed(sy(head[1])) << "\" r=\""
      << fixed(60.0 * v.scale) << "\" fill=\"none\" stroke=\"" << part_color(BodyPart::Trunk) << "\" stroke-width=\""
      << fixed(opts.stroke * 0.5) << "\"/>\n";
  out << "<text x=\"8\" y=\"20\" font-family=\"monospace\" font-size=\"14\">frame " << frame << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::size_t render_sequence(const PoseSequence& pose, const std::filesystem::path& dir, const Skeleton& skel,
                            const RenderOptions& opts) {
  pose.validate();
  std::filesystem::create_directories(dir);
  std::ostringstream index;
  index << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>frames</title></head><body>\n";
  index << "<p>" << pose.frames << " frames at " << pose.frame_rate << " fps</p>\n<ol start=\"0\">\n";
  for (std::size_t t = 0; t < pose.frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.svg", t);
    io::write_text_atomic(dir / name, render_frame_svg(pose, t, skel, opts));
    index << "<li><a href=\"" << name << "\">" << name << "</a></li>\n";
  }
  index << "</ol>\n</body></html>\n";
  io::write_text_atomic(dir / "index.html", index.str());
  return pose.frames;
}

void save_pose(const std::filesystem::path& path, const PoseSequence& pose) {
  pose.validate();
  nlohmann::json j;
  j["fps"] = pose.frame_rate;
  j["frames"] = pose.frames;
  j["joints"] = Skeleton::upper_body().joints();
  j["positions"] = nlohmann::json::array();
  for (std::size_t t = 0; t < pose.frames; ++t) {
    j["positions"].push_back(std::vector<double>(pose.positions.begin() + static_cast<std::ptrdiff_t>(t * kNumJoints * 3),
                                                 pose.positions.begin() + static_cast<std::ptrdiff_t>((t + 1) * kNumJoints * 3)));
  }
  io::write_text_atomic(path, j.dump(1) + "\n");
}

PoseSequence load_pose(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.contains("positions")) throw Error(ErrorCode::BadMagic, path.string() + " is not a pose file");
  PoseSequence pose(j.at("frames").get<std::size_t>(), j.at("fps").get<double>());
  const auto& rows = j.at("positions");
  if (rows.size() != pose.frames) throw Error(ErrorCode::Truncated, path.string() + ": frame count mismatch");
  for (std::size_t t = 0; t < pose.frames; ++t) {
    const auto row = rows[t].get<std::vector<double>>();
    if (row.size() != kNumJoints * 3) throw Error(ErrorCode::ShapeMismatch, path.string() + ": bad joint row");
    std::copy(row.begin(), row.end(), pose.positions.begin() + static_cast<std::ptrdiff_t>(t * kNumJoints * 3));
  }
  return pose;
}

}  // namespace s2ag
