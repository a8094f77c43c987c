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

#include "skeleton_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "common.hpp"

namespace skf::data {

namespace {

std::string shape_str(std::size_t a, std::size_t b) {
  return std::to_string(a) + "x" + std::to_string(b);
}

}  // namespace

SkeletonSequence::SkeletonSequence(std::size_t frames, std::size_t joints,
                                   std::size_t dims, double fps,
                                   std::vector<double> data, std::vector<int> parents)
    : frames_(frames),
      joints_(joints),
      dims_(dims),
      fps_(fps),
      data_(std::move(data)),
      parents_(std::move(parents)) {
  if (frames_ < 1 || joints_ < 1) fail(ErrorKind::kShape, "sequence needs T >= 1 and J >= 1");
  if (dims_ != 2 && dims_ != 3) fail(ErrorKind::kShape, "sequence dims must be 2 or 3");
  if (!(fps_ > 0.0) || !std::isfinite(fps_)) fail(ErrorKind::kInvalidArgument, "fps must be > 0");
  if (data_.size() != frames_ * joints_ * dims_) {
    fail(ErrorKind::kShape, "sequence data has " + std::to_string(data_.size()) +
                                " values, expected " +
                                std::to_string(frames_ * joints_ * dims_));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "sequence coordinates must be finite");
  }
  if (!parents_.empty()) {
    if (parents_.size() != joints_) fail(ErrorKind::kShape, "parents length must equal joints");
    for (std::size_t j = 0; j < joints_; ++j) {
      const int p = parents_[j];
      if (p < -1 || p >= static_cast<int>(joints_) || p == static_cast<int>(j)) {
        fail(ErrorKind::kShape, "invalid parent index for joint " + std::to_string(j));
      }
    }
  }
}

SkeletonSequence SkeletonSequence::zeros(std::size_t frames, std::size_t joints,
                                         std::size_t dims, double fps) {
  return SkeletonSequence(frames, joints, dims, fps,
                          std::vector<double>(frames * joints * dims, 0.0));
}

SkeletonSequence SkeletonSequence::with_data(std::vector<double> data) const {
  return SkeletonSequence(frames_, joints_, dims_, fps_, std::move(data), parents_);
}

SkeletonSequence SkeletonSequence::window(std::size_t start, std::size_t count) const {
  if (count == 0 || start + count > frames_) fail(ErrorKind::kShape, "window out of range");
  const std::size_t stride = joints_ * dims_;
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(start * stride),
                          data_.begin() + static_cast<std::ptrdiff_t>((start + count) * stride));
  return SkeletonSequence(count, joints_, dims_, fps_, std::move(out), parents_);
}

ConfidenceMask::ConfidenceMask(std::size_t frames, std::size_t joints,
                               std::vector<std::uint8_t> values)
    : frames_(frames), joints_(joints), values_(std::move(values)) {
  if (values_.size() != frames_ * joints_) {
    fail(ErrorKind::kShape, "mask has " + std::to_string(values_.size()) +
                                " values, expected " + shape_str(frames_, joints_));
  }
  for (auto v : values_) {
    if (v > 1) fail(ErrorKind::kInvalidArgument, "mask values must be exactly 0 or 1");
  }
}

ConfidenceMask ConfidenceMask::ones(std::size_t frames, std::size_t joints) {
  return ConfidenceMask(frames, joints, std::vector<std::uint8_t>(frames * joints, 1));
}

ConfidenceMask ConfidenceMask::zeros(std::size_t frames, std::size_t joints) {
  return ConfidenceMask(frames, joints, std::vector<std::uint8_t>(frames * joints, 0));
}

std::size_t ConfidenceMask::count_present() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), 1));
}

ConfidenceMask ConfidenceMask::window(std::size_t start, std::size_t count) const {
  if (count == 0 || start + count > frames_) fail(ErrorKind::kShape, "window out of range");
  std::vector<std::uint8_t> out(values_.begin() + static_cast<std::ptrdiff_t>(start * joints_),
                                values_.begin() + static_cast<std::ptrdiff_t>((start + count) * joints_));
  return ConfidenceMask(count, joints_, std::move(out));
}

OcclusionPattern parse_pattern(const std::string& name) {
  if (name == "random-joint") return OcclusionPattern::kRandomJoint;
  if (name == "limb-coherent") return OcclusionPattern::kLimbCoherent;
  if (name == "temporal-burst") return OcclusionPattern::kTemporalBurst;
  fail(ErrorKind::kInvalidArgument, "unknown occlusion pattern '" + name + "'");
}

std::string pattern_name(OcclusionPattern pattern) {
  switch (pattern) {
    case OcclusionPattern::kRandomJoint: return "random-joint";
    case OcclusionPattern::kLimbCoherent: return "limb-coherent";
    case OcclusionPattern::kTemporalBurst: return "temporal-burst";
  }
  return "random-joint";
}

ConfidenceMask make_mask(std::span<const double> confidences, std::size_t frames,
                         std::size_t joints, double threshold) {
  if (confidences.size() != frames * joints) {
    fail(ErrorKind::kShape, "confidences have " + std::to_string(confidences.size()) +
                                " values, expected " + shape_str(frames, joints));
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "threshold must lie in [0, 1]");
  }
  std::vector<std::uint8_t> values(confidences.size());
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    if (!std::isfinite(confidences[i])) fail(ErrorKind::kInvalidArgument, "confidences must be finite");
    values[i] = confidences[i] >= threshold ? 1 : 0;
  }
  return ConfidenceMask(frames, joints, std::move(values));
}

void check_same_shape(const SkeletonSequence& x, const ConfidenceMask& m) {
  if (x.frames() != m.frames() || x.joints() != m.joints()) {
    fail(ErrorKind::kShape, "mask shape " + shape_str(m.frames(), m.joints()) +
                                " does not match sequence " + shape_str(x.frames(), x.joints()));
  }
}

SkeletonSequence apply_mask(const SkeletonSequence& x, const ConfidenceMask& m) {
  check_same_shape(x, m);
  std::vector<double> out(x.data().begin(), x.data().end());
  const std::size_t dims = x.dims();
  for (std::size_t i = 0; i < m.values().size(); ++i) {
    if (m.values()[i] == 0) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * dims), dims, 0.0);
  }
  return x.with_data(std::move(out));
}

namespace {

// Joints hanging below `root` in the topology, root first. Without a topology
// the group is a run of consecutive joint indices.
std::vector<std::size_t> limb_group(const SkeletonSequence& x, std::size_t root) {
  std::vector<std::size_t> group{root};
  const auto& parents = x.parents();
  if (parents.empty()) {
    for (std::size_t j = root + 1; j < std::min(x.joints(), root + 3); ++j) group.push_back(j);
    return group;
  }
  for (std::size_t k = 0; k < group.size(); ++k) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      if (parents[j] == static_cast<int>(group[k])) group.push_back(j);
    }
  }
  return group;
}

}  // namespace

Corrupted inject_occlusions(const SkeletonSequence& x, const CorruptionSpec& spec) {
  if (!(spec.missing_rate >= 0.0 && spec.missing_rate <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "missing_rate must lie in [0, 1]");
  }
  const std::size_t frames = x.frames();
  const std::size_t joints = x.joints();
  const std::size_t total = frames * joints;
  const auto target = static_cast<std::size_t>(std::llround(spec.missing_rate * static_cast<double>(total)));
  std::vector<std::uint8_t> values(total, 1);
  Rng rng(derive_seed(spec.seed, 0x0cc1u));

  std::size_t removed = 0;
  auto remove = [&](std::size_t idx) {
    if (removed < target && values[idx] == 1) {
      values[idx] = 0;
      ++removed;
    }
  };

  switch (spec.pattern) {
    case OcclusionPattern::kRandomJoint: {
      std::vector<std::size_t> order(total);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < target; ++i) {
        const std::size_t k = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(order[i], order[k]);
        values[order[i]] = 0;
      }
      removed = target;
      break;
    }
    case OcclusionPattern::kLimbCoherent: {
      // A limb vanishes for a short run of frames, mimicking self-occlusion.
      while (removed < target) {
        const std::size_t root = static_cast<std::size_t>(rng.below(joints));
        const std::size_t start = static_cast<std::size_t>(rng.below(frames));
        const std::size_t len = 1 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, frames / 6)));
        const auto group = limb_group(x, root);
        for (std::size_t t = start; t < std::min(frames, start + len); ++t) {
          for (std::size_t j : group) remove(t * joints + j);
        }
      }
      break;
    }
    case OcclusionPattern::kTemporalBurst: {
      while (removed < target) {
        const std::size_t j = static_cast<std::size_t>(rng.below(joints));
        const std::size_t start = static_cast<std::size_t>(rng.below(frames));
        const std::size_t len = 1 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, frames / 3)));
        for (std::size_t t = start; t < std::min(frames, start + len); ++t) remove(t * joints + j);
      }
      break;
    }
  }
  ConfidenceMask mask(frames, joints, std::move(values));
  auto masked = apply_mask(x, mask);
  return {std::move(masked), std::move(mask)};
}

Normalized normalize(const SkeletonSequence& x, const std::optional<ConfidenceMask>& mask) {
  if (mask) check_same_shape(x, *mask);
  const std::size_t dims = x.dims();
  auto visible = [&](std::size_t t, std::size_t j) { return !mask || mask->present(t, j); };

  std::vector<double> root(dims, 0.0);
  std::size_t n0 = 0;
  for (std::size_t j = 0; j < x.joints(); ++j) {
    if (!visible(0, j)) continue;
    for (std::size_t d = 0; d < dims; ++d) root[d] += x.at(0, j, d);
    ++n0;
  }
  if (n0 == 0) fail(ErrorKind::kDegenerate, "normalize: all joints missing in frame 0");
  for (double& r : root) r /= static_cast<double>(n0);

  std::vector<double> lo(dims, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dims, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      if (!visible(t, j)) continue;
      for (std::size_t d = 0; d < dims; ++d) {
        lo[d] = std::min(lo[d], x.at(t, j, d));
        hi[d] = std::max(hi[d], x.at(t, j, d));
      }
    }
  }
  double scale = 0.0;
  for (std::size_t d = 0; d < dims; ++d) scale = std::max(scale, hi[d] - lo[d]);
  if (!(scale > 0.0)) scale = 1.0;

  std::vector<double> out(x.data().size(), 0.0);
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      if (!visible(t, j)) continue;
      for (std::size_t d = 0; d < dims; ++d) {
        out[(t * x.joints() + j) * dims + d] = (x.at(t, j, d) - root[d]) / scale;
      }
    }
  }
  return {x.with_data(std::move(out)), std::move(root), scale};
}

SkeletonSequence denormalize(const SkeletonSequence& x, std::span<const double> root,
                             double scale, const std::optional<ConfidenceMask>& mask) {
  if (root.size() != x.dims()) fail(ErrorKind::kShape, "root vector must have D entries");
  if (mask) check_same_shape(x, *mask);
  std::vector<double> out(x.data().size(), 0.0);
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      if (mask && !mask->present(t, j)) continue;
      for (std::size_t d = 0; d < x.dims(); ++d) {
        out[(t * x.joints() + j) * x.dims() + d] = x.at(t, j, d) * scale + root[d];
      }
    }
  }
  return x.with_data(std::move(out));
}

// ---------------------------------------------------------------------------
// Synthetic dancer

namespace {

enum Chain { kSpine = 0, kLeftArm, kRightArm, kLeftLeg, kRightLeg, kChainCount };

struct Bone {
  int parent;
  Chain chain;
  int depth;  // position along its chain, from 0
  double length;
  double rest_angle;
};

}  // namespace

SynthDance synth_dance(std::size_t frames, std::size_t joints, double bpm,
                       std::uint64_t seed, const SynthOptions& options) {
  if (frames < 2 || joints < 2) fail(ErrorKind::kInvalidArgument, "synth_dance needs T >= 2 and J >= 2");
  if (!(bpm > 0.0) || !(options.fps > 0.0) || options.sample_rate <= 0) {
    fail(ErrorKind::kInvalidArgument, "synth_dance needs bpm > 0, fps > 0 and sample_rate > 0");
  }
  Rng rng(derive_seed(seed, 0x5d17u));
  const double beat_frames = 60.0 * options.fps / bpm;
  const double first_beat = rng.uniform(0.0, beat_frames);

  // Chain layout: joint k >= 1 goes to chain (k - 1) mod 5. Arms hang off
  // the first spine joint, everything else off the pelvis (joint 0).
  constexpr std::array<double, kChainCount> kRestAngle = {
      M_PI / 2, M_PI + 0.5, -0.5, -M_PI / 2 - 0.25, -M_PI / 2 + 0.25};
  constexpr std::array<double, kChainCount> kLength = {0.11, 0.085, 0.085, 0.12, 0.12};
  std::array<double, kChainCount> amplitude{};
  std::array<double, kChainCount> sign{};
  for (int c = 0; c < kChainCount; ++c) {
    amplitude[c] = rng.uniform(0.15, 0.45);
    sign[c] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  std::vector<Bone> bones(joints);
  std::array<int, kChainCount> last{-1, -1, -1, -1, -1};
  std::vector<int> parents(joints, -1);
  for (std::size_t k = 1; k < joints; ++k) {
    const auto chain = static_cast<Chain>((k - 1) % kChainCount);
    int parent = last[chain];
    if (parent < 0) parent = (chain == kLeftArm || chain == kRightArm) ? std::max(last[kSpine], 0) : 0;
    const int depth = last[chain] < 0 ? 0 : bones[static_cast<std::size_t>(last[chain])].depth + 1;
    bones[k] = {parent, chain, depth, kLength[chain] * rng.uniform(0.85, 1.15),
                kRestAngle[chain] + rng.uniform(-0.15, 0.15)};
    parents[k] = parent;
    last[chain] = static_cast<int>(k);
  }
  const double root_x = 0.5 + rng.uniform(-0.05, 0.05);
  const double root_y = 0.45 + rng.uniform(-0.05, 0.05);
  const double sway = rng.uniform(0.01, 0.03);
  const double bounce = rng.uniform(0.005, 0.015);

  // Swing extrema land on beats: cos(pi * (f - first_beat) / beat_frames).
  const double omega = M_PI / beat_frames;
  std::vector<double> data(frames * joints * 2, 0.0);
  std::vector<double> angle(joints, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const double phase = omega * (static_cast<double>(f) - first_beat);
    const double swing = std::cos(phase);
    double* frame = data.data() + f * joints * 2;
    frame[0] = root_x + sway * swing;
    frame[1] = root_y + bounce * std::cos(2.0 * phase);
    for (std::size_t k = 1; k < joints; ++k) {
      const Bone& b = bones[k];
      const double local = sign[b.chain] * amplitude[b.chain] * swing / (1.0 + 0.3 * b.depth);
      const double parent_angle = b.depth == 0 ? 0.0 : angle[static_cast<std::size_t>(b.parent)];
      angle[k] = (b.depth == 0 ? b.rest_angle : parent_angle) + local;
      const double* p = frame + static_cast<std::size_t>(b.parent) * 2;
      frame[k * 2] = p[0] + b.length * std::cos(angle[k]);
      frame[k * 2 + 1] = p[1] + b.length * std::sin(angle[k]);
    }
  }

  // Click track on every beat over a quiet seeded drone.
  const double duration = static_cast<double>(frames) / options.fps;
  const auto n_samples = static_cast<std::size_t>(std::llround(duration * options.sample_rate));
  const double sr = options.sample_rate;
  const double drone_hz = rng.uniform(110.0, 440.0);
  const double click_hz = rng.uniform(900.0, 1500.0);
  std::vector<double> audio(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    audio[i] = 0.08 * std::sin(2.0 * M_PI * drone_hz * static_cast<double>(i) / sr);
  }
  const auto click_len = static_cast<std::size_t>(0.04 * sr);
  for (double beat = first_beat; beat < static_cast<double>(frames); beat += beat_frames) {
    const auto start = static_cast<std::size_t>(std::llround(beat / options.fps * sr));
    for (std::size_t i = 0; i < click_len && start + i < n_samples; ++i) {
      const double t = static_cast<double>(i) / sr;
      audio[start + i] += 0.8 * std::exp(-t / 0.008) * std::sin(2.0 * M_PI * click_hz * t);
    }
  }

  SkeletonSequence sequence(frames, joints, 2, options.fps, std::move(data), std::move(parents));
  return {std::move(sequence), std::move(audio), options.sample_rate, first_beat, beat_frames};
}

// ---------------------------------------------------------------------------
// Sequence files

std::string sequence_to_json(const SkeletonSequence& x, const std::optional<ConfidenceMask>& mask) {
  using nlohmann::json;
  if (mask) check_same_shape(x, *mask);
  json doc;
  doc["version"] = kSequenceFormatVersion;
  doc["fps"] = x.fps();
  doc["joints"] = x.joints();
  doc["dims"] = x.dims();
  json frames = json::array();
  for (std::size_t t = 0; t < x.frames(); ++t) {
    json row = json::array();
    for (std::size_t j = 0; j < x.joints(); ++j) {
      auto p = x.joint(t, j);
      row.push_back(json(std::vector<double>(p.begin(), p.end())));
    }
    frames.push_back(std::move(row));
  }
  doc["data"] = std::move(frames);
  if (mask) {
    json rows = json::array();
    for (std::size_t t = 0; t < mask->frames(); ++t) {
      json row = json::array();
      for (std::size_t j = 0; j < mask->joints(); ++j) row.push_back(mask->present(t, j) ? 1 : 0);
      rows.push_back(std::move(row));
    }
    doc["mask"] = std::move(rows);
  }
  if (!x.parents().empty()) doc["parents"] = x.parents();
  return doc.dump();
}

SequenceFile sequence_from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "at line L, column C" in what().
    fail(ErrorKind::kParse, std::string("sequence file: ") + e.what() +
                                " (byte offset " + std::to_string(e.byte) + ")");
  }
  try {
    if (!doc.is_object()) fail(ErrorKind::kParse, "sequence file: top level must be an object");
    if (!doc.contains("version")) fail(ErrorKind::kParse, "sequence file: missing 'version'");
    const int version = doc.at("version").get<int>();
    if (version != kSequenceFormatVersion) {
      fail(ErrorKind::kVersion, "sequence file: version " + std::to_string(version) +
                                    " is not supported (expected " +
                                    std::to_string(kSequenceFormatVersion) + ")");
    }
    const double fps = doc.at("fps").get<double>();
    const auto joints = doc.at("joints").get<std::size_t>();
    const auto dims = doc.at("dims").get<std::size_t>();
    const json& frames = doc.at("data");
    if (!frames.is_array() || frames.empty()) fail(ErrorKind::kParse, "sequence file: 'data' must be a non-empty array");
    std::vector<double> data;
    data.reserve(frames.size() * joints * dims);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const json& row = frames[t];
      if (!row.is_array() || row.size() != joints) {
        fail(ErrorKind::kShape, "sequence file: frame " + std::to_string(t) + " does not have " +
                                    std::to_string(joints) + " joints");
      }
      for (std::size_t j = 0; j < joints; ++j) {
        const json& p = row[j];
        if (!p.is_array() || p.size() != dims) {
          fail(ErrorKind::kShape, "sequence file: joint " + std::to_string(j) + " of frame " +
                                      std::to_string(t) + " does not have " +
                                      std::to_string(dims) + " coordinates");
        }
        for (const auto& v : p) data.push_back(v.get<double>());
      }
    }
    std::vector<int> parents;
    if (doc.contains("parents")) parents = doc.at("parents").get<std::vector<int>>();
    SkeletonSequence sequence(frames.size(), joints, dims, fps, std::move(data), std::move(parents));

    std::optional<ConfidenceMask> mask;
    if (doc.contains("mask")) {
      const json& rows = doc.at("mask");
      if (!rows.is_array() || rows.size() != sequence.frames()) {
        fail(ErrorKind::kShape, "sequence file: mask has " + std::to_string(rows.size()) +
                                    " rows, data has " + std::to_string(sequence.frames()) + " frames");
      }
      std::vector<std::uint8_t> values;
      values.reserve(sequence.frames() * joints);
      for (const auto& row : rows) {
        if (!row.is_array() || row.size() != joints) {
          fail(ErrorKind::kShape, "sequence file: mask row width does not match joints");
        }
        for (const auto& v : row) {
          const int b = v.get<int>();
          if (b != 0 && b != 1) fail(ErrorKind::kParse, "sequence file: mask values must be 0 or 1");
          values.push_back(static_cast<std::uint8_t>(b));
        }
      }
      mask.emplace(sequence.frames(), joints, std::move(values));
    }
    return {std::move(sequence), std::move(mask)};
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("sequence file: ") + e.what());
  }
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  out << bytes;
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path + "'");
}

}  // namespace

void save_sequence(const std::string& path, const SkeletonSequence& x,
                   const std::optional<ConfidenceMask>& mask) {
  write_file(path, sequence_to_json(x, mask) + "\n");
}

SequenceFile load_sequence(const std::string& path) {
  return sequence_from_json(read_file(path));
}

// ---------------------------------------------------------------------------
// WAV

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}
std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}
std::uint16_t get_u16(const std::string& s, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) |
                                    (static_cast<unsigned char>(s[at + 1]) << 8));
}

}  // namespace

void save_wav(const std::string& path, std::span<const double> samples, int sample_rate) {
  if (sample_rate <= 0) fail(ErrorKind::kInvalidArgument, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);  // PCM
  put_u16(s, 1);  // mono
  put_u32(s, static_cast<std::uint32_t>(sample_rate));
  put_u32(s, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(s, 2);
  put_u16(s, 16);
  s += "data";
  put_u32(s, data_bytes);
  for (double x : samples) {
    const double c = std::clamp(x, -1.0, 1.0);
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  write_file(path, s);
}

PcmAudio load_wav(const std::string& path) {
  const std::string s = read_file(path);
  if (s.size() < 12 || s.compare(0, 4, "RIFF") != 0 || s.compare(8, 4, "WAVE") != 0) {
    fail(ErrorKind::kParse, "'" + path + "' is not a RIFF/WAVE file");
  }
  std::size_t at = 12;
  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (at + 8 <= s.size()) {
    const std::string id = s.substr(at, 4);
    const std::uint32_t size = get_u32(s, at + 4);
    const std::size_t body = at + 8;
    if (body + size > s.size()) {
      fail(ErrorKind::kParse, "'" + path + "': chunk '" + id + "' truncated at offset " + std::to_string(body));
    }
    if (id == "fmt ") {
      if (size < 16) fail(ErrorKind::kParse, "'" + path + "': fmt chunk too short");
      format = get_u16(s, body);
      channels = get_u16(s, body + 2);
      rate = get_u32(s, body + 4);
      bits = get_u16(s, body + 14);
    } else if (id == "data") {
      if (format != 1 || bits != 16 || channels < 1) {
        fail(ErrorKind::kParse, "'" + path + "': only 16-bit PCM WAV is supported");
      }
      const std::size_t frames = size / (2u * static_cast<std::size_t>(channels));
      PcmAudio audio;
      audio.sample_rate = static_cast<int>(rate);
      audio.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          const auto v = static_cast<std::int16_t>(get_u16(s, body + (i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * 2));
          acc += static_cast<double>(v) / 32767.0;
        }
        audio.samples[i] = acc / channels;
      }
      return audio;
    }
    at = body + size + (size & 1u);
  }
  fail(ErrorKind::kParse, "'" + path + "': no data chunk");
}

}  // namespace skf::data
