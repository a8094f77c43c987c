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

#include "audio_features.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <fftw3.h>
#include <json.hpp>

#include "common.hpp"

namespace skf::audio {

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

namespace {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

Spectrogram stft(std::span<const double> samples, std::size_t window_len, std::size_t hop) {
  if (window_len == 0 || (window_len & (window_len - 1)) != 0) {
    fail(ErrorKind::kInvalidArgument, "stft window length must be a power of two");
  }
  if (hop == 0 || hop > window_len) fail(ErrorKind::kInvalidArgument, "stft hop must be in (0, window]");
  if (samples.size() < window_len) {
    fail(ErrorKind::kLength, "stft needs at least " + std::to_string(window_len) + " samples, got " +
                                 std::to_string(samples.size()));
  }
  const std::size_t frames = (samples.size() - window_len) / hop + 1;
  const std::size_t bins = window_len / 2 + 1;
  const auto window = hann_window(window_len);

  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * window_len)));
  std::unique_ptr<fftw_complex, FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(window_len), in.get(), out.get(), FFTW_ESTIMATE));

  Spectrogram spec;
  spec.window_len = window_len;
  spec.hop = hop;
  spec.values.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = samples.data() + f * hop;
    for (std::size_t i = 0; i < window_len; ++i) in.get()[i] = src[i] * window[i];
    fftw_execute(plan.get());
    for (std::size_t b = 0; b < bins; ++b) {
      spec.values(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = {out.get()[b][0], out.get()[b][1]};
    }
  }
  return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(std::size_t window_len, int sample_rate, std::size_t n_mels) {
  if (n_mels < 1) fail(ErrorKind::kInvalidArgument, "n_mels must be >= 1");
  if (sample_rate <= 0) fail(ErrorKind::kInvalidArgument, "sample_rate must be > 0");
  const std::size_t bins = window_len / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double top = hz_to_mel(nyquist);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(window_len);
  Matrix fb = Matrix::Zero(static_cast<Eigen::Index>(n_mels), static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * bin_hz;
      double w = 0.0;
      if (f > lo && f < mid) w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = w;
      total += w;
    }
    // Filters narrower than one bin would otherwise be empty.
    if (total <= 0.0) {
      const auto nearest = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(std::lround(mid / bin_hz)));
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nearest)) = 1.0;
    }
  }
  return fb;
}

namespace {

Matrix power_of(const Spectrogram& spec) { return spec.values.cwiseAbs2(); }

Matrix log_mel(const Matrix& power, const Matrix& fb) {
  Matrix mel = power * fb.transpose();
  return mel.array().log1p().matrix();
}

// Half-wave rectified log-mel flux, averaged over bands; frame 0 is 0.
std::vector<double> onset_strength(const Matrix& mel) {
  std::vector<double> env(static_cast<std::size_t>(mel.rows()), 0.0);
  for (Eigen::Index f = 1; f < mel.rows(); ++f) {
    env[static_cast<std::size_t>(f)] =
        (mel.row(f) - mel.row(f - 1)).cwiseMax(0.0).sum() / static_cast<double>(mel.cols());
  }
  return env;
}

double frame_center_seconds(double frame, std::size_t window_len, std::size_t hop, int sample_rate) {
  return (frame * static_cast<double>(hop) + static_cast<double>(window_len) / 2.0) / sample_rate;
}

}  // namespace

Matrix mel_spectrogram(const Spectrogram& spec, int sample_rate, std::size_t n_mels) {
  return log_mel(power_of(spec), mel_filterbank(spec.window_len, sample_rate, n_mels));
}

std::vector<double> track_beats(std::span<const double> samples, int sample_rate) {
  if (samples.size() < kDefaultWindow) return {};
  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::abs(s));
  if (!(peak > 0.0)) return {};
  // Peak normalization makes the tracker blind to input gain.
  std::vector<double> x(samples.begin(), samples.end());
  for (double& s : x) s /= peak;

  const auto spec = stft(x, kDefaultWindow, kDefaultHop);
  const auto env = onset_strength(mel_spectrogram(spec, sample_rate, kDefaultMels));
  const std::size_t n = env.size();
  if (n < 4) return {};
  double mean = 0.0;
  for (double v : env) mean += v;
  mean /= static_cast<double>(n);
  // Light smoothing keeps fractional periods from splitting across two lags.
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = env[i > 0 ? i - 1 : i];
    const double right = env[i + 1 < n ? i + 1 : i];
    centered[i] = 0.25 * left + 0.5 * env[i] + 0.25 * right - mean;
  }

  auto autocorr = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += centered[i] * centered[i + lag];
    return acc / static_cast<double>(n);
  };
  const double ac0 = autocorr(0);
  if (!(ac0 > 1e-12)) return {};

  const double frame_rate = static_cast<double>(sample_rate) / kDefaultHop;
  const auto lag_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(frame_rate * 60.0 / 240.0)));
  const auto lag_max = std::min<std::size_t>(static_cast<std::size_t>(std::ceil(frame_rate * 60.0 / 40.0)),
                                             (2 * n) / 3);
  if (lag_max <= lag_min) return {};
  std::vector<double> ac(2 * lag_max + 2, 0.0);
  for (std::size_t lag = lag_min - 1; lag < ac.size() && lag < n; ++lag) ac[lag] = autocorr(lag);

  // Log-normal tempo prior around 120 bpm, one octave wide.
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
    if (ac[lag] < ac[lag - 1] || ac[lag] < ac[lag + 1]) continue;
    const double bpm = 60.0 * frame_rate / static_cast<double>(lag);
    const double prior = std::exp(-0.5 * std::pow(std::log2(bpm / 120.0), 2));
    const double score = (ac[lag] + 0.5 * std::max(0.0, ac[2 * lag])) * prior;
    if (score > best_score) {
      best_score = score;
      best = lag;
    }
  }
  if (best == 0 || ac[best] / ac0 < 0.05) return {};
  double period = static_cast<double>(best);
  {
    const double a = ac[best - 1], b = ac[best], c = ac[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) period += 0.5 * (a - c) / denom;
  }

  auto env_at = [&](double pos) {
    if (pos < 0.0 || pos > static_cast<double>(n - 1)) return 0.0;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < n ? env[i] * (1.0 - frac) + env[i + 1] * frac : env[i];
  };
  double best_phase = 0.0;
  double phase_score = -1.0;
  for (double phase = 0.0; phase < period; phase += 0.25) {
    double score = 0.0;
    for (double p = phase; p < static_cast<double>(n); p += period) score += env_at(p);
    if (score > phase_score) {
      phase_score = score;
      best_phase = phase;
    }
  }

  // Snap each predicted beat to the strongest onset within a quarter period.
  std::vector<double> beats;
  const double radius = period / 4.0;
  for (double p = best_phase; p < static_cast<double>(n); p += period) {
    const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil(p - radius)));
    const auto hi = static_cast<std::size_t>(std::min(static_cast<double>(n - 1), std::floor(p + radius)));
    std::size_t arg = lo;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (env[i] > env[arg]) arg = i;
    }
    if (env[arg] <= 0.0) continue;
    beats.push_back(frame_center_seconds(static_cast<double>(arg), kDefaultWindow, kDefaultHop, sample_rate));
  }
  return beats;
}

Matrix resample_rows(const Matrix& rows, std::size_t frames) {
  if (rows.rows() < 1) fail(ErrorKind::kLength, "cannot resample an empty feature track");
  const auto src = static_cast<std::size_t>(rows.rows());
  Matrix out(static_cast<Eigen::Index>(frames), rows.cols());
  for (std::size_t i = 0; i < frames; ++i) {
    const double pos = frames == 1 || src == 1
                           ? 0.0
                           : static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(frames - 1);
    const auto k = std::min(src - 1, static_cast<std::size_t>(pos));
    const double frac = pos - static_cast<double>(k);
    if (k + 1 < src && frac > 0.0) {
      out.row(static_cast<Eigen::Index>(i)) = (1.0 - frac) * rows.row(static_cast<Eigen::Index>(k)) +
                                              frac * rows.row(static_cast<Eigen::Index>(k + 1));
    } else {
      out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(k));
    }
  }
  return out;
}

AudioFeatureTrack align_to_motion(const AudioFeatureTrack& track, std::size_t frames) {
  AudioFeatureTrack out;
  out.temporal = resample_rows(track.temporal, frames);
  out.mel = track.mel.rows() > 0 ? resample_rows(track.mel, frames) : track.mel;
  out.sample_rate = track.sample_rate;
  out.fps = track.fps;
  return out;
}

AudioFeatureTrack extract_features(std::span<const double> samples, int sample_rate, double fps) {
  if (sample_rate <= 0 || !(fps > 0.0)) fail(ErrorKind::kInvalidArgument, "sample_rate and fps must be positive");
  const auto spec = stft(samples, kDefaultWindow, kDefaultHop);
  const Matrix power = power_of(spec);
  const Matrix mel = log_mel(power, mel_filterbank(kDefaultWindow, sample_rate, kDefaultMels));
  const auto frames = static_cast<Eigen::Index>(spec.frames());
  const auto n_mels = static_cast<Eigen::Index>(kDefaultMels);

  // Per-STFT-frame features; the beat column is filled at motion rate below.
  Matrix raw = Matrix::Zero(frames, static_cast<Eigen::Index>(kTemporalWidth));

  // Orthonormal DCT-II of the log-mel rows.
  Matrix dct(static_cast<Eigen::Index>(kMfccCount), n_mels);
  for (Eigen::Index k = 0; k < dct.rows(); ++k) {
    const double norm = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_mels));
    for (Eigen::Index m = 0; m < n_mels; ++m) {
      dct(k, m) = norm * std::cos(M_PI * static_cast<double>(k) * (static_cast<double>(m) + 0.5) /
                                  static_cast<double>(n_mels));
    }
  }
  raw.middleCols(kMfccOffset, kMfccCount) = mel * dct.transpose();

  // Chroma: fold bin power onto pitch classes (A4 = 440 Hz), peak-normalized.
  const double bin_hz = static_cast<double>(sample_rate) / kDefaultWindow;
  std::vector<int> pitch_class(spec.bins(), -1);
  for (std::size_t b = 1; b < spec.bins(); ++b) {
    const double hz = static_cast<double>(b) * bin_hz;
    if (hz < 32.7) continue;
    const long midi = std::lround(12.0 * std::log2(hz / 440.0) + 69.0);
    pitch_class[b] = static_cast<int>(((midi % 12) + 12) % 12);
  }
  for (Eigen::Index f = 0; f < frames; ++f) {
    Eigen::Matrix<double, 1, kChromaCount> chroma = Eigen::Matrix<double, 1, kChromaCount>::Zero();
    for (std::size_t b = 0; b < spec.bins(); ++b) {
      if (pitch_class[b] >= 0) chroma(pitch_class[b]) += power(f, static_cast<Eigen::Index>(b));
    }
    const double top = chroma.maxCoeff();
    if (top > 0.0) chroma /= top;
    raw.block(f, kChromaOffset, 1, kChromaCount) = chroma;
  }

  const auto env = onset_strength(mel);
  for (Eigen::Index f = 0; f < frames; ++f) {
    raw(f, kOnsetColumn) = env[static_cast<std::size_t>(f)];
    double acc = 0.0;
    const double* src = samples.data() + static_cast<std::size_t>(f) * kDefaultHop;
    for (std::size_t i = 0; i < kDefaultWindow; ++i) acc += src[i] * src[i];
    raw(f, kRmsColumn) = std::sqrt(acc / kDefaultWindow);
  }

  // Motion frame t sits at t / fps seconds; interpolate between STFT frames.
  const double duration = static_cast<double>(samples.size()) / sample_rate;
  const auto motion_frames = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(duration * fps)));
  AudioFeatureTrack track;
  track.sample_rate = sample_rate;
  track.fps = fps;
  track.temporal = Matrix::Zero(static_cast<Eigen::Index>(motion_frames), static_cast<Eigen::Index>(kTemporalWidth));
  track.mel = Matrix::Zero(static_cast<Eigen::Index>(motion_frames), n_mels);
  for (std::size_t t = 0; t < motion_frames; ++t) {
    const double seconds = static_cast<double>(t) / fps;
    double pos = (seconds * sample_rate - kDefaultWindow / 2.0) / kDefaultHop;
    pos = std::clamp(pos, 0.0, static_cast<double>(frames - 1));
    const auto k = static_cast<Eigen::Index>(pos);
    const double frac = pos - static_cast<double>(k);
    const auto row = static_cast<Eigen::Index>(t);
    if (k + 1 < frames && frac > 0.0) {
      track.temporal.row(row) = (1.0 - frac) * raw.row(k) + frac * raw.row(k + 1);
      track.mel.row(row) = (1.0 - frac) * mel.row(k) + frac * mel.row(k + 1);
    } else {
      track.temporal.row(row) = raw.row(k);
      track.mel.row(row) = mel.row(k);
    }
  }
  for (double beat : track_beats(samples, sample_rate)) {
    const long t = std::lround(beat * fps);
    if (t >= 0 && t < static_cast<long>(motion_frames)) track.temporal(t, static_cast<Eigen::Index>(kBeatColumn)) = 1.0;
  }
  return track;
}

Matrix temporal_features(std::span<const double> samples, int sample_rate, double fps) {
  return extract_features(samples, sample_rate, fps).temporal;
}

Vector pooled_features(const AudioFeatureTrack& track) {
  if (track.temporal.rows() < 1) fail(ErrorKind::kLength, "empty feature track");
  return track.temporal.colwise().mean().transpose();
}

std::string features_to_json(const AudioFeatureTrack& track) {
  using nlohmann::json;
  auto rows = [](const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.row(r).begin(), m.row(r).end());
      out.push_back(std::move(row));
    }
    return out;
  };
  json doc;
  doc["sample_rate"] = track.sample_rate;
  doc["fps"] = track.fps;
  doc["temporal"] = rows(track.temporal);
  doc["mel"] = rows(track.mel);
  return doc.dump();
}

}  // namespace skf::audio
