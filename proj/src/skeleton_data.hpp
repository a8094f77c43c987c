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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skf::data {

inline constexpr int kSequenceFormatVersion = 1;
inline constexpr std::size_t kDefaultJoints = 137;

/// T x J x D joint coordinates in normalized screen units, frame-major.
///
/// `parents` optionally carries the kinematic chain (parent index per joint,
/// -1 for roots). It is only used for rendering and limb-coherent occlusion.
class SkeletonSequence {
 public:
  SkeletonSequence(std::size_t frames, std::size_t joints, std::size_t dims,
                   double fps, std::vector<double> data,
                   std::vector<int> parents = {});

  static SkeletonSequence zeros(std::size_t frames, std::size_t joints,
                                std::size_t dims, double fps = 30.0);

  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }
  std::size_t dims() const { return dims_; }
  double fps() const { return fps_; }
  const std::vector<int>& parents() const { return parents_; }

  double at(std::size_t t, std::size_t j, std::size_t d) const {
    return data_[(t * joints_ + j) * dims_ + d];
  }
  std::span<const double> joint(std::size_t t, std::size_t j) const {
    return {data_.data() + (t * joints_ + j) * dims_, dims_};
  }
  std::span<const double> data() const { return data_; }

  /// Copy with replaced coordinates; shape, fps and topology are kept.
  SkeletonSequence with_data(std::vector<double> data) const;
  /// Frames [start, start + count).
  SkeletonSequence window(std::size_t start, std::size_t count) const;

  bool operator==(const SkeletonSequence&) const = default;

 private:
  std::size_t frames_;
  std::size_t joints_;
  std::size_t dims_;
  double fps_;
  std::vector<double> data_;
  std::vector<int> parents_;
};

/// Binary T x J joint-presence matrix.
class ConfidenceMask {
 public:
  ConfidenceMask(std::size_t frames, std::size_t joints,
                 std::vector<std::uint8_t> values);

  static ConfidenceMask ones(std::size_t frames, std::size_t joints);
  static ConfidenceMask zeros(std::size_t frames, std::size_t joints);

  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }
  bool present(std::size_t t, std::size_t j) const {
    return values_[t * joints_ + j] != 0;
  }
  std::span<const std::uint8_t> values() const { return values_; }
  std::size_t count_present() const;
  std::size_t count_missing() const { return values_.size() - count_present(); }
  ConfidenceMask window(std::size_t start, std::size_t count) const;

  bool operator==(const ConfidenceMask&) const = default;

 private:
  std::size_t frames_;
  std::size_t joints_;
  std::vector<std::uint8_t> values_;
};

enum class OcclusionPattern { kRandomJoint, kLimbCoherent, kTemporalBurst };

OcclusionPattern parse_pattern(const std::string& name);
std::string pattern_name(OcclusionPattern pattern);

struct CorruptionSpec {
  double missing_rate = 0.0;
  OcclusionPattern pattern = OcclusionPattern::kRandomJoint;
  std::uint64_t seed = 0;
};

/// Thresholds detector confidences (T x J, row-major); `conf >= threshold`
/// counts as present.
ConfidenceMask make_mask(std::span<const double> confidences, std::size_t frames,
                         std::size_t joints, double threshold);

void check_same_shape(const SkeletonSequence& x, const ConfidenceMask& m);

SkeletonSequence apply_mask(const SkeletonSequence& x, const ConfidenceMask& m);

struct Corrupted {
  SkeletonSequence sequence;
  ConfidenceMask mask;
};

/// Removes exactly round(rate * T * J) joint-frames and zeroes them.
Corrupted inject_occlusions(const SkeletonSequence& x, const CorruptionSpec& spec);

struct Normalized {
  SkeletonSequence sequence;
  std::vector<double> root;
  double scale;
};

/// Centers on the mean visible joint of frame 0 and divides by the largest
/// per-axis extent of visible joints. Missing entries stay zero.
Normalized normalize(const SkeletonSequence& x,
                     const std::optional<ConfidenceMask>& mask = std::nullopt);
SkeletonSequence denormalize(const SkeletonSequence& x, std::span<const double> root,
                             double scale,
                             const std::optional<ConfidenceMask>& mask = std::nullopt);

struct SynthDance {
  SkeletonSequence sequence;
  std::vector<double> audio;
  int sample_rate;
  /// First beat, in motion frames; beats repeat every beat_frames.
  double first_beat_frame;
  double beat_frames;
};

struct SynthOptions {
  double fps = 30.0;
  int sample_rate = 22050;
};

/// Stick figure whose limbs swing in phase with a click track at `bpm`.
SynthDance synth_dance(std::size_t frames, std::size_t joints, double bpm,
                       std::uint64_t seed, const SynthOptions& options = {});

struct SequenceFile {
  SkeletonSequence sequence;
  std::optional<ConfidenceMask> mask;
};

std::string sequence_to_json(const SkeletonSequence& x,
                             const std::optional<ConfidenceMask>& mask = std::nullopt);
SequenceFile sequence_from_json(const std::string& text);
void save_sequence(const std::string& path, const SkeletonSequence& x,
                   const std::optional<ConfidenceMask>& mask = std::nullopt);
SequenceFile load_sequence(const std::string& path);

struct PcmAudio {
  std::vector<double> samples;
  int sample_rate = 0;
};

/// 16-bit PCM mono WAV. Multi-channel input is averaged down to mono.
void save_wav(const std::string& path, std::span<const double> samples, int sample_rate);
PcmAudio load_wav(const std::string& path);

}  // namespace skf::data
