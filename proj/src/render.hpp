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

// Stick-figure SVG frames and flat CSV dumps of skeleton sequences.

#pragma once

#include <string>
#include <vector>

#include "skeleton_data.hpp"

namespace skf::render {

struct SvgOptions {
  int width = 320;
  int height = 320;
  double margin = 0.05;  // fraction of the larger side
  double joint_radius = 3.0;
};

/// One frame as a standalone SVG document. The view box is fitted to the
/// whole sequence so consecutive frames share a frame of reference. Bones
/// are drawn from each joint to its parent when the sequence has parents.
std::string frame_svg(const data::SkeletonSequence& x, std::size_t frame, const SvgOptions& options = {});

/// frame,joint,x,y[,z] rows.
std::string sequence_csv(const data::SkeletonSequence& x, const data::ConfidenceMask* mask = nullptr);

/// Writes frame_00000.svg ... into dir (created if missing); returns paths.
std::vector<std::string> write_svg_frames(const data::SkeletonSequence& x, const std::string& dir,
                                          const SvgOptions& options = {});
/// Writes dir/joints.csv; returns its path.
std::string write_csv(const data::SkeletonSequence& x, const std::string& dir,
                      const data::ConfidenceMask* mask = nullptr);

}  // namespace skf::render
