// Copyright 2026 The SkeleFusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "render.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

#include "common.hpp"

namespace skf::render {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::kIo, "short write to '" + path + "'");
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace

std::string frame_svg(const data::SkeletonSequence& x, std::size_t frame, const SvgOptions& o) {
  if (frame >= x.frames()) fail(ErrorKind::kInvalidArgument, "frame index out of range");
  if (x.dims() < 2) fail(ErrorKind::kDimension, "rendering needs at least 2 coordinate dimensions");
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      x0 = std::min(x0, x.at(t, j, 0));
      x1 = std::max(x1, x.at(t, j, 0));
      y0 = std::min(y0, x.at(t, j, 1));
      y1 = std::max(y1, x.at(t, j, 1));
    }
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-9});
  const double pad = o.margin * span;
  const double s = std::min(o.width, o.height) / (span + 2.0 * pad);
  auto px = [&](double v) { return (v - x0 + pad) * s; };
  auto py = [&](double v) { return (v - y0 + pad) * s; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
      << "\" viewBox=\"0 0 " << o.width << ' ' << o.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<g stroke=\"black\" stroke-width=\"2\" stroke-linecap=\"round\">\n";
  const auto& parents = x.parents();
  for (std::size_t j = 0; j < parents.size(); ++j) {
    if (parents[j] < 0) continue;
    const auto p = static_cast<std::size_t>(parents[j]);
    out << "<line x1=\"" << num(px(x.at(frame, p, 0))) << "\" y1=\"" << num(py(x.at(frame, p, 1))) << "\" x2=\""
        << num(px(x.at(frame, j, 0))) << "\" y2=\"" << num(py(x.at(frame, j, 1))) << "\"/>\n";
  }
  out << "</g>\n<g fill=\"crimson\">\n";
  for (std::size_t j = 0; j < x.joints(); ++j) {
    out << "<circle cx=\"" << num(px(x.at(frame, j, 0))) << "\" cy=\"" << num(py(x.at(frame, j, 1))) << "\" r=\""
        << num(o.joint_radius) << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::string sequence_csv(const data::SkeletonSequence& x, const data::ConfidenceMask* mask) {
  if (mask) data::check_same_shape(x, *mask);
  static const char* axes[] = {"x", "y", "z"};
  std::ostringstream out;
  out << "frame,joint";
  for (std::size_t d = 0; d < x.dims(); ++d) out << ',' << (d < 3 ? axes[d] : ("d" + std::to_string(d)).c_str());
  if (mask) out << ",present";
  out << '\n';
  char buf[40];
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      out << t << ',' << j;
      for (std::size_t d = 0; d < x.dims(); ++d) {
        const auto r = std::to_chars(buf, buf + sizeof buf, x.at(t, j, d));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
      }
      if (mask) out << ',' << (mask->present(t, j) ? 1 : 0);
      out << '\n';
    }
  }
  return out.str();
}

std::vector<std::string> write_svg_frames(const data::SkeletonSequence& x, const std::string& dir,
                                          const SvgOptions& options) {
  make_dir(dir);
  std::vector<std::string> paths;
  for (std::size_t t = 0; t < x.frames(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.svg", t);
    const std::string path = (std::filesystem::path(dir) / name).string();
    write_file(path, frame_svg(x, t, options));
    paths.push_back(path);
  }
  return paths;
}

std::string write_csv(const data::SkeletonSequence& x, const std::string& dir, const data::ConfidenceMask* mask) {
  make_dir(dir);
  const std::string path = (std::filesystem::path(dir) / "joints.csv").string();
  write_file(path, sequence_csv(x, mask));
  return path;
}

}  // namespace skf::render
