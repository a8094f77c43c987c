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

// Residual latent diffusion.
//
// States are indexed 0..T with z_0 clean and z_T the most noised. Sampling
// starts from z_T and applies z <- z - eps(z, t) for t = T-1 down to 0, so
// eps(z_{t+1}, t) is trained to reproduce the increment z_{t+1} - z_t.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "autodiff.hpp"
#include "matrix.hpp"
#include "nn.hpp"
#include "st_vae.hpp"

namespace skf::diffusion {

struct NoiseSchedule {
  /// Non-increasing noise levels; sigmas[0] is the level of z_T.
  std::vector<double> sigmas;

  static NoiseSchedule geometric(std::size_t steps = 50, double high = 1.0, double low = 0.01);
  std::size_t steps() const { return sigmas.size(); }
  /// Noise level of state t: 0 for t = 0, sigmas[T - t] otherwise.
  double level(std::size_t t) const;
  void validate() const;
};

struct Trajectory {
  Matrix states;  // (T + 1) x latent_dim

  std::size_t steps() const { return static_cast<std::size_t>(states.rows()) - 1; }
  Vector state(std::size_t t) const { return states.row(static_cast<Eigen::Index>(t)).transpose(); }
};

/// z_t = z0 + level(t) * eps with one seeded Gaussian draw per trajectory.
Trajectory build_trajectory(const Vector& z0, const NoiseSchedule& schedule, std::uint64_t seed);

struct DenoiserConfig {
  int latent_dim = 16;
  int hidden = 128;
  int steps = 50;
  int cond_dim = 35;

  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// sign(a) * log1p(|a|) per entry; compresses the raw pooled audio features.
Vector condition_vector(const Vector& pooled);

/// Two GELU layers over z W_z + time_embed[t] + c W_c, then a linear output
/// layer that starts at zero. Absent conditioning uses a learned null vector.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t init_seed);

  const DenoiserConfig& config() const { return config_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& params() { return params_; }

  /// Row i of z is evaluated at step steps[i]. cond is 1 x cond_dim or null.
  ad::Var forward(ad::Tape& tape, ad::Var z, const std::vector<int>& steps, const Vector* cond) const;
  Vector residual(const Vector& z, std::size_t t, const Vector* cond) const;

 private:
  DenoiserConfig config_;
  nn::ParamStore params_;
  nn::Linear in_z_;
  nn::Linear in_c_;
  std::size_t time_embed_ = 0;
  std::size_t null_cond_ = 0;
  nn::Linear hidden_;
  nn::Linear out_;
};

/// z - residual, verbatim.
Vector apply_step(const Vector& z, const Vector& residual);
Vector step(const Denoiser& model, const Vector& z, std::size_t t, const Vector* cond);

using ResidualFn = std::function<Vector(const Vector& z, std::size_t t)>;

/// sum_t || z_t - z_{t+1} + eps(z_{t+1}, t) ||^2 for an arbitrary eps.
double trajectory_loss(const Trajectory& traj, const ResidualFn& eps);
/// Same objective through the denoiser; gradients are added into grads.
double diffusion_loss(const Denoiser& model, const Trajectory& traj, const Vector* cond,
                      std::vector<Matrix>* grads);

/// z_T ~ N(0, sigmas[0]^2 I) from seed, then every step down to z_0.
Vector sample_latent(const Denoiser& model, const NoiseSchedule& schedule, const Vector* cond,
                     std::uint64_t seed);
data::SkeletonSequence sample(const Denoiser& model, const vae::StVae& decoder, const NoiseSchedule& schedule,
                              const Vector* cond, std::uint64_t seed, std::size_t frames, double fps = 30.0);

}  // namespace skf::diffusion
