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

// Spatio-temporal transformer VAE over skeleton sequences.
//
// Every joint of every frame is one token. Tokens first attend to the other
// joints of their own frame (spatial stage, missing joints receive zero
// attention weight), are pooled into one token per frame, then attend over
// frames (temporal stage). The mean over frames feeds two linear heads that
// give the latent mean and log-variance. The decoder broadcasts a latent
// vector to T frame queries, runs a temporal transformer and maps every frame
// to J x D coordinates.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autodiff.hpp"
#include "matrix.hpp"
#include "nn.hpp"
#include "skeleton_data.hpp"

namespace skf::vae {

struct ModelConfig {
  int d_model = 64;
  int n_spatial_layers = 2;
  int n_temporal_layers = 2;
  int n_heads = 4;
  int latent_dim = 16;
  int joints = static_cast<int>(data::kDefaultJoints);
  int dims = 2;
  int max_frames = 30;
  int ff_mult = 4;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LatentDistribution {
  Vector mu;
  Vector log_sigma_sq;
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

class StVae {
 public:
  StVae(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& params() { return params_; }

  // Differentiable stages. `coords` is (T*J) x D, frame-major.
  ad::Var embed_joints(ad::Tape& tape, ad::Var coords, const data::ConfidenceMask& mask) const;
  ad::Var spatial_encode(ad::Tape& tape, ad::Var tokens, const data::ConfidenceMask& mask) const;
  /// Mean over present joints of each frame; the mask token when none is.
  ad::Var frame_tokens(ad::Tape& tape, ad::Var spatial, const data::ConfidenceMask& mask) const;
  /// T x d_model encoding of T frame tokens.
  ad::Var temporal_encode(ad::Tape& tape, ad::Var frames) const;
  ad::Var pool(ad::Tape& tape, ad::Var encoded) const;

  struct Encoded {
    ad::Var mu;       // 1 x latent_dim
    ad::Var log_var;  // 1 x latent_dim
  };
  Encoded encode(ad::Tape& tape, ad::Var coords, const data::ConfidenceMask& mask) const;
  /// T x (J*D) coordinates from a 1 x latent_dim code.
  ad::Var decode(ad::Tape& tape, ad::Var z, std::size_t frames) const;

  // Inference helpers on frozen parameters.
  LatentDistribution encode(const data::SkeletonSequence& x, const data::ConfidenceMask& mask) const;
  data::SkeletonSequence decode(std::span<const double> z, std::size_t frames, double fps = 30.0) const;
  /// decode(encode(x, mask).mu)
  data::SkeletonSequence reconstruct(const data::SkeletonSequence& x, const data::ConfidenceMask& mask) const;

  void check_input(const data::SkeletonSequence& x, const data::ConfidenceMask& mask) const;

 private:
  ModelConfig config_;
  nn::ParamStore params_;
  nn::Linear embed_;
  std::size_t mask_token_ = 0;
  std::size_t joint_pos_ = 0;
  std::size_t frame_pos_ = 0;
  std::vector<nn::TransformerBlock> spatial_;
  nn::LayerNorm spatial_norm_;
  std::size_t temporal_pos_ = 0;
  std::vector<nn::TransformerBlock> temporal_;
  nn::LayerNorm temporal_norm_;
  nn::Linear mu_head_;
  nn::Linear log_var_head_;
  nn::Linear latent_in_;
  std::size_t decoder_pos_ = 0;
  std::vector<nn::TransformerBlock> decoder_;
  nn::LayerNorm decoder_norm_;
  nn::Linear joint_head_;
};

/// (T*J) x D coordinate matrix of a sequence.
Matrix coordinate_matrix(const data::SkeletonSequence& x);
/// T x J matrix of 0/1 weights.
Matrix mask_weights(const data::ConfidenceMask& mask);

/// z = mu + sigma * eps with eps ~ N(0, I); log-variance is clamped to
/// [-10, 10] and an explicit -inf means sigma = 0.
Vector reparameterize(const LatentDistribution& dist, std::uint64_t seed);
Vector standard_normal(std::size_t n, std::uint64_t seed);

double recon_loss_mse(const data::SkeletonSequence& recon, const data::SkeletonSequence& gt,
                      const data::ConfidenceMask& mask);
double recon_loss_l1(const data::SkeletonSequence& recon, const data::SkeletonSequence& gt,
                     const data::ConfidenceMask& mask);
double kl_loss(const LatentDistribution& dist);
double total_loss(double recon, double kl, double beta);

enum class ReconKind { kMse, kL1 };

struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  /// recon divided by the number of joints that count toward it.
  double recon_per_joint = 0.0;
};

struct VaeSample {
  const data::SkeletonSequence* target;   // ground truth for the loss
  const data::ConfidenceMask* input_mask; // what the encoder may see
  const data::ConfidenceMask* loss_mask;  // which joints are penalized
};

/// Forward + backward of recon + beta * KL on one sequence.
/// Gradients are added into `grads` (aligned to model.params()) when given.
LossBreakdown vae_objective(const StVae& model, const VaeSample& sample, ReconKind kind, double beta,
                            std::uint64_t noise_seed, std::vector<Matrix>* grads);

}  // namespace skf::vae
