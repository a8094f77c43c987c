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

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace skf::audio {

// Column layout of the per-frame temporal feature vector.
inline constexpr std::size_t kMfccCount = 20;
inline constexpr std::size_t kChromaCount = 12;
inline constexpr std::size_t kMfccOffset = 0;
inline constexpr std::size_t kChromaOffset = kMfccOffset + kMfccCount;
inline constexpr std::size_t kOnsetColumn = kChromaOffset + kChromaCount;
inline constexpr std::size_t kRmsColumn = kOnsetColumn + 1;
inline constexpr std::size_t kBeatColumn = kRmsColumn + 1;
inline constexpr std::size_t kTemporalWidth = kBeatColumn + 1;
static_assert(kTemporalWidth == 35);

inline constexpr std::size_t kDefaultWindow = 1024;
inline constexpr std::size_t kDefaultHop = 512;
inline constexpr std::size_t kDefaultMels = 80;

using ComplexMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Spectrogram {
  ComplexMatrix values;  // frames x (window_len / 2 + 1)
  std::size_t window_len = 0;
  std::size_t hop = 0;

  std::size_t frames() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(values.cols()); }
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

Spectrogram stft(std::span<const double> samples, std::size_t window_len = kDefaultWindow,
                 std::size_t hop = kDefaultHop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-scale filters spanning 0..sample_rate/2; n_mels x bins.
Matrix mel_filterbank(std::size_t window_len, int sample_rate, std::size_t n_mels);

/// log(1 + mel-filtered power); frames x n_mels.
Matrix mel_spectrogram(const Spectrogram& spec, int sample_rate,
                       std::size_t n_mels = kDefaultMels);

/// Beat times in seconds, from onset-strength autocorrelation.
std::vector<double> track_beats(std::span<const double> samples, int sample_rate);

struct AudioFeatureTrack {
  Matrix temporal;  // frames x 35
  Matrix mel;       // frames x n_mels
  int sample_rate = 0;
  double fps = 0.0;

  std::size_t frames() const { return static_cast<std::size_t>(temporal.rows()); }
};

/// Motion-rate feature track: round(duration * fps) frames.
AudioFeatureTrack extract_features(std::span<const double> samples, int sample_rate,
                                   double fps);

/// Just the T x 35 part of extract_features.
Matrix temporal_features(std::span<const double> samples, int sample_rate, double fps);

/// Row-wise linear resampling onto `frames` evenly spaced points; the first
/// and last rows map onto the first and last output rows.
Matrix resample_rows(const Matrix& rows, std::size_t frames);

AudioFeatureTrack align_to_motion(const AudioFeatureTrack& track, std::size_t frames);

/// Column means of the temporal features (the diffusion conditioning vector).
Vector pooled_features(const AudioFeatureTrack& track);

std::string features_to_json(const AudioFeatureTrack& track);

}  // namespace skf::audio
