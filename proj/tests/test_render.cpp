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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>

#include "render.hpp"
#include "skeleton_data.hpp"

using namespace skf;
namespace fs = std::filesystem;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("svg frame draws every joint and bone") {
  const auto d = data::synth_dance(5, 12, 120.0, 3);
  const std::string svg = render::frame_svg(d.sequence, 2);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "<circle") == 12);
  CHECK(count(svg, "<line") == 11);
  CHECK(svg == render::frame_svg(d.sequence, 2));
  CHECK(svg != render::frame_svg(d.sequence, 3));
  CHECK_THROWS(render::frame_svg(d.sequence, 5));
}

TEST_CASE("svg frames land inside the canvas") {
  const auto d = data::synth_dance(6, 12, 100.0, 4);
  render::SvgOptions o;
  o.width = 200;
  o.height = 100;
  const std::regex cx("cx=\"([-0-9.]+)\" cy=\"([-0-9.]+)\"");
  for (std::size_t t = 0; t < 6; ++t) {
    const std::string svg = render::frame_svg(d.sequence, t, o);
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cx); it != std::sregex_iterator(); ++it) {
      const double x = std::stod((*it)[1]), y = std::stod((*it)[2]);
      CHECK(x >= 0.0);
      CHECK(x <= 200.0);
      CHECK(y >= 0.0);
      CHECK(y <= 100.0);
    }
  }
}

TEST_CASE("one svg file per frame") {
  const auto d = data::synth_dance(7, 12, 120.0, 5);
  const auto dir = fs::temp_directory_path() / "skf_render_test";
  fs::remove_all(dir);
  const auto files = render::write_svg_frames(d.sequence, dir.string());
  CHECK(files.size() == 7);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".svg";
  CHECK(n == 7);
  CHECK(fs::exists(dir / "frame_00000.svg"));
  CHECK(fs::exists(dir / "frame_00006.svg"));
  fs::remove_all(dir);
}

TEST_CASE("csv dump") {
  data::SkeletonSequence x(2, 2, 2, 30.0, {0.5, 1.0, -2.0, 3.25, 0.1, 0.2, 7.0, 8.0});
  const data::ConfidenceMask m(2, 2, {1, 0, 1, 1});
  CHECK(render::sequence_csv(x) == "frame,joint,x,y\n0,0,0.5,1\n0,1,-2,3.25\n1,0,0.1,0.2\n1,1,7,8\n");
  CHECK(render::sequence_csv(x, &m) ==
        "frame,joint,x,y,present\n0,0,0.5,1,1\n0,1,-2,3.25,0\n1,0,0.1,0.2,1\n1,1,7,8,1\n");
  data::SkeletonSequence z(1, 1, 3, 30.0, {1.0, 2.0, 3.0});
  CHECK(render::sequence_csv(z) == "frame,joint,x,y,z\n0,0,1,2,3\n");

  const auto dir = fs::temp_directory_path() / "skf_render_csv";
  fs::remove_all(dir);
  const auto path = render::write_csv(x, dir.string(), &m);
  std::ifstream in(path);
  const std::string body{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  CHECK(body == render::sequence_csv(x, &m));
  fs::remove_all(dir);
}
