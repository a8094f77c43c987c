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

// Distribution metrics over skeleton sequences and the missing-data sweep.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "matrix.hpp"
#include "skeleton_data.hpp"
#include "st_vae.hpp"

namespace skf::metrics {

/// Per-joint mean position, velocity mean and velocity std, each J x D,
/// concatenated (k = 3 J D). Needs at least two frames.
Vector feature_embed(const data::SkeletonSequence& x);
/// Encoder mean of the sequence under a fully visible mask.
Vector latent_embed(const vae::StVae& model, const data::SkeletonSequence& x);

enum class FeatureSpace { kDescriptor, kLatent };
std::string feature_space_name(FeatureSpace space);

/// n x k matrix of embeddings, one row per sequence.
Matrix embed_all(const std::vector<data::SkeletonSequence>& xs, FeatureSpace space = FeatureSpace::kDescriptor,
                 const vae::StVae* model = nullptr);

struct GaussianStats {
  Vector mu;
  Matrix sigma;
  std::size_t n = 0;
};

inline constexpr double kShrinkage = 1e-6;

/// Sample mean and covariance (n - 1 denominator). Adds kShrinkage * I when
/// n < k.
GaussianStats gaussian_stats(const Matrix& features);

/// Symmetric PSD square root by eigendecomposition, negative eigenvalues
/// clamped to zero.
Matrix psd_sqrt(const Matrix& a);

/// ||mu_r - mu_g||^2 + tr(S_r + S_g) - 2 tr(sqrt(sqrt(S_r) S_g sqrt(S_r))), floored at 0.
double fid(const GaussianStats& r, const GaussianStats& g);
double fid(const std::vector<data::SkeletonSequence>& real, const std::vector<data::SkeletonSequence>& gen,
           FeatureSpace space = FeatureSpace::kDescriptor, const vae::StVae* model = nullptr);

/// Mean over sequences of the population variance of every coordinate about
/// that sequence's mean joint position.
double diversity(const std::vector<data::SkeletonSequence>& xs);

using Reconstructor =
    std::function<data::SkeletonSequence(const data::SkeletonSequence& corrupted, const data::ConfidenceMask& mask)>;

struct SweepConfig {
  std::string name;
  Reconstructor reconstruct;
};

struct SweepOptions {
  std::vector<double> rates{0.05, 0.10, 0.15, 0.20};
  std::vector<std::uint64_t> seeds{0};
  data::OcclusionPattern pattern = data::OcclusionPattern::kRandomJoint;
  FeatureSpace space = FeatureSpace::kDescriptor;
  const vae::StVae* feature_model = nullptr;
};

struct SweepCell {
  double rate = 0.0;
  std::string config;
  std::uint64_t seed = 0;
  double fid = 0.0;
};

struct SweepReport {
  std::vector<SweepCell> cells;  // rate-major, then config, then seed
  FeatureSpace space = FeatureSpace::kDescriptor;

  /// Mean FID over seeds for one (rate, config).
  double mean_fid(double rate, const std::string& config) const;
  /// "rate,config,fid" with one row per (rate, config), seed-averaged.
  std::string csv() const;
  std::string json() const;
};

/// Corrupts every clean sequence at each (rate, seed), reconstructs it with
/// every config and scores the result against the clean set. Cells run in
/// parallel; the report does not depend on the thread count.
SweepReport robustness_sweep(const std::vector<data::SkeletonSequence>& clean, const std::vector<SweepConfig>& configs,
                             const SweepOptions& options = {});

}  // namespace skf::metrics
