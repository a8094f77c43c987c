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

// Two-stage training (VAE, then latent diffusion), checkpoints and the
// inference pipeline built on top of them.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffusion.hpp"
#include "optimizer.hpp"
#include "skeleton_data.hpp"
#include "st_vae.hpp"

namespace skf::train {

enum class Stage { kVae, kDiffusion };

struct TrainConfig {
  Stage stage = Stage::kVae;
  vae::ReconKind loss_kind = vae::ReconKind::kMse;
  bool use_mask = true;
  double beta = 1e-3;
  /// Fraction of all steps over which beta ramps up linearly from 0.
  double beta_warmup = 0.1;
  double lr = 1e-3;
  int warmup_steps = 100;
  double weight_decay = 1e-2;
  int batch_size = 1;
  int epochs = 100;
  /// When > 0, replaces epochs * ceil(N / batch_size).
  int steps = 0;
  int seq_len = 30;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;

  // Occlusions drawn fresh for every VAE sample; the rate is uniform in
  // [corrupt_min, corrupt_max]. Both zero disables it.
  double corrupt_min = 0.0;
  double corrupt_max = 0.0;
  data::OcclusionPattern corrupt_pattern = data::OcclusionPattern::kRandomJoint;

  double audio_drop = 0.1;
  /// Checks once per epoch that masked joints do not change any gradient.
  bool debug_probe = false;

  vae::ModelConfig model;
  int denoiser_hidden = 128;
  int diffusion_steps = 50;
  double sigma_max = 1.0;
  double sigma_min = 0.01;

  std::string data_dir;
  std::string vae_checkpoint;
  // Synthetic dataset used when data_dir is empty.
  int synth_count = 4;
  double synth_bpm_min = 90.0;
  double synth_bpm_max = 150.0;
  std::uint64_t synth_seed = 100;

  void validate() const;
  std::int64_t total_steps(std::size_t dataset_size) const;
  diffusion::NoiseSchedule schedule() const;
  diffusion::DenoiserConfig denoiser() const;
};

/// key=value lines (# comments) or a JSON object; unknown keys are errors.
void apply_config_text(TrainConfig& config, const std::string& text);
void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value);
TrainConfig load_config(const std::string& path);
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

struct Example {
  data::SkeletonSequence sequence;  // normalized
  data::ConfidenceMask mask;
  std::optional<Vector> condition;  // condition_vector of the pooled audio features
  std::vector<double> root;
  double scale = 1.0;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t size() const { return examples.size(); }
};

/// Sequence windows of seq_len frames from data_dir (*.json, with a
/// same-stem .wav as optional audio) or from synth_dance.
Dataset load_dataset(const TrainConfig& config);
Example make_example(const data::SkeletonSequence& x, const std::optional<data::ConfidenceMask>& mask,
                     const std::optional<Vector>& condition);

struct LossRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  std::int64_t step = 0;
  nn::ParamStore vae;
  std::optional<nn::ParamStore> denoiser;
  /// Moments of whichever store config.stage trains.
  AdamWState optimizer;
  std::vector<LossRecord> history;
  /// Mean normalization of the training set, used to place generated motion.
  std::vector<double> root;
  double scale = 1.0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies tensors into a model's store after checking every name and shape;
/// nothing is written on mismatch.
void load_params(nn::ParamStore& dst, const nn::ParamStore& src);
/// Model built from the checkpoint; errors when expected is given and differs.
vae::StVae restore_vae(const Checkpoint& ckpt, const vae::ModelConfig* expected = nullptr);
diffusion::Denoiser restore_denoiser(const Checkpoint& ckpt);

struct TrainHooks {
  std::string checkpoint_path;  // periodic and final checkpoints; empty: none
  std::string log_path;         // CSV step,loss,recon,kl; empty: none
  const Checkpoint* resume = nullptr;
  /// Stop (without error) once this many steps are done; 0 runs to the end.
  std::int64_t stop_after = 0;
  std::function<void(const LossRecord&)> on_step;
};

Checkpoint train_vae(const TrainConfig& config, const Dataset& data, const TrainHooks& hooks = {});
Checkpoint train_diffusion(const TrainConfig& config, const Dataset& data, const Checkpoint& vae_ckpt,
                           const TrainHooks& hooks = {});

/// Mean diffusion loss over the dataset latents with fixed trajectory seeds.
double diffusion_eval_loss(const diffusion::Denoiser& model, const vae::StVae& vae, const Dataset& data,
                           const diffusion::NoiseSchedule& schedule, std::uint64_t seed, int draws_per_example = 8,
                           bool use_mask = true);

/// Trained models plus the preprocessing around them.
class Pipeline {
 public:
  explicit Pipeline(const Checkpoint& ckpt);

  const vae::StVae& vae() const { return vae_; }
  bool has_denoiser() const { return denoiser_.has_value(); }
  const TrainConfig& config() const { return config_; }

  /// Normalize with the mask, encode (all-ones mask for unmasked models),
  /// decode and undo the normalization.
  data::SkeletonSequence reconstruct(const data::SkeletonSequence& x, const data::ConfidenceMask& mask) const;
  /// Samples a latent conditioned on the track and decodes that many frames.
  data::SkeletonSequence generate(std::span<const double> audio, int sample_rate, std::uint64_t seed,
                                  std::size_t frames, double fps = 30.0) const;
  data::SkeletonSequence generate_unconditional(std::uint64_t seed, std::size_t frames, double fps = 30.0) const;

 private:
  data::SkeletonSequence place(const data::SkeletonSequence& normalized) const;

  TrainConfig config_;
  vae::StVae vae_;
  std::optional<diffusion::Denoiser> denoiser_;
  diffusion::NoiseSchedule schedule_;
  std::vector<double> root_;
  double scale_ = 1.0;
};

}  // namespace skf::train
