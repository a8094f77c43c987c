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

#include "diffusion.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "common.hpp"

namespace skf::diffusion {

NoiseSchedule NoiseSchedule::geometric(std::size_t steps, double high, double low) {
  if (steps < 1) fail(ErrorKind::kConfig, "noise schedule needs at least one step");
  if (!(high > low) || !(low > 0.0)) fail(ErrorKind::kConfig, "geometric schedule needs high > low > 0");
  NoiseSchedule s;
  s.sigmas.resize(steps);
  if (steps == 1) {
    s.sigmas[0] = high;
    return s;
  }
  const double ratio = std::log(low / high) / static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < steps; ++i) s.sigmas[i] = high * std::exp(ratio * static_cast<double>(i));
  s.sigmas.back() = low;
  return s;
}

double NoiseSchedule::level(std::size_t t) const {
  if (t > sigmas.size()) fail(ErrorKind::kInvalidArgument, "state index beyond the schedule");
  return t == 0 ? 0.0 : sigmas[sigmas.size() - t];
}

void NoiseSchedule::validate() const {
  if (sigmas.empty()) fail(ErrorKind::kConfig, "empty noise schedule");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!std::isfinite(sigmas[i]) || sigmas[i] < 0.0) fail(ErrorKind::kConfig, "noise levels must be finite and >= 0");
    if (i > 0 && sigmas[i] > sigmas[i - 1]) fail(ErrorKind::kConfig, "noise levels must not increase");
  }
}

Trajectory build_trajectory(const Vector& z0, const NoiseSchedule& schedule, std::uint64_t seed) {
  schedule.validate();
  const Vector eps = vae::standard_normal(static_cast<std::size_t>(z0.size()), derive_seed(seed, 0xd1f));
  Trajectory traj;
  traj.states.resize(static_cast<Eigen::Index>(schedule.steps() + 1), z0.size());
  for (std::size_t t = 0; t <= schedule.steps(); ++t) {
    traj.states.row(static_cast<Eigen::Index>(t)) = (z0 + schedule.level(t) * eps).transpose();
  }
  return traj;
}

void DenoiserConfig::validate() const {
  if (latent_dim < 1 || hidden < 1 || steps < 1 || cond_dim < 1) {
    fail(ErrorKind::kConfig, "denoiser sizes must all be >= 1");
  }
}

Vector condition_vector(const Vector& pooled) {
  Vector c(pooled.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double a = pooled(i);
    c(i) = std::copysign(std::log1p(std::abs(a)), a);
  }
  return c;
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  nn::Initializer init(derive_seed(init_seed, 0xde7));
  const Eigen::Index h = config_.hidden;
  in_z_ = nn::Linear::create(params_, init, "den.in_z", config_.latent_dim, h);
  in_c_ = nn::Linear::create(params_, init, "den.in_c", config_.cond_dim, h);
  time_embed_ = params_.add("den.time_embed", init.uniform(config_.steps, h, 1.0));
  null_cond_ = params_.add("den.null_cond", init.uniform(1, config_.cond_dim, 1.0));
  hidden_ = nn::Linear::create(params_, init, "den.hidden", h, h);
  out_ = nn::Linear::create(params_, init, "den.out", h, config_.latent_dim, true);
}

ad::Var Denoiser::forward(ad::Tape& tape, ad::Var z, const std::vector<int>& steps, const Vector* cond) const {
  if (z.cols() != config_.latent_dim || static_cast<std::size_t>(z.rows()) != steps.size()) {
    fail(ErrorKind::kShape, "denoiser: latent batch shape mismatch");
  }
  for (int t : steps) {
    if (t < 0 || t >= config_.steps) {
      fail(ErrorKind::kInvalidArgument, "denoiser: step " + std::to_string(t) + " outside [0, " +
                                            std::to_string(config_.steps) + ")");
    }
  }
  ad::Var c;
  if (cond) {
    if (cond->size() != config_.cond_dim) fail(ErrorKind::kShape, "denoiser: conditioning width mismatch");
    c = tape.constant(cond->transpose());
  } else {
    c = params_.bind(tape, null_cond_);
  }
  ad::Var ones = tape.constant(Matrix::Ones(z.rows(), 1));
  ad::Var pre = ad::add(in_z_(tape, params_, z), ad::matmul(ones, in_c_(tape, params_, c)));
  pre = ad::add(pre, ad::gather_rows(params_.bind(tape, time_embed_), steps));
  ad::Var h = ad::gelu(hidden_(tape, params_, ad::gelu(pre)));
  return out_(tape, params_, h);
}

Vector Denoiser::residual(const Vector& z, std::size_t t, const Vector* cond) const {
  ad::Tape tape(false);
  Matrix row = z.transpose();
  ad::Var out = forward(tape, tape.constant(std::move(row)), {static_cast<int>(t)}, cond);
  return out.value().row(0).transpose();
}

Vector apply_step(const Vector& z, const Vector& residual) {
  if (z.size() != residual.size()) fail(ErrorKind::kShape, "step: residual size mismatch");
  return z - residual;
}

Vector step(const Denoiser& model, const Vector& z, std::size_t t, const Vector* cond) {
  return apply_step(z, model.residual(z, t, cond));
}

double trajectory_loss(const Trajectory& traj, const ResidualFn& eps) {
  double total = 0.0;
  for (std::size_t t = 0; t < traj.steps(); ++t) {
    const Vector next = traj.state(t + 1);
    total += (traj.state(t) - next + eps(next, t)).squaredNorm();
  }
  return total;
}

double diffusion_loss(const Denoiser& model, const Trajectory& traj, const Vector* cond,
                      std::vector<Matrix>* grads) {
  const auto steps = static_cast<Eigen::Index>(traj.steps());
  if (steps != model.config().steps) fail(ErrorKind::kConfig, "trajectory length does not match the denoiser");
  ad::Tape tape(grads != nullptr);
  const Matrix next = traj.states.bottomRows(steps);
  const Matrix increments = next - traj.states.topRows(steps);
  std::vector<int> index(static_cast<std::size_t>(steps));
  std::iota(index.begin(), index.end(), 0);
  ad::Var pred = model.forward(tape, tape.constant(next), index, cond);
  ad::Var loss = ad::weighted_squared_error(pred, increments, Matrix::Ones(steps, 1));
  if (grads) {
    tape.backward(loss);
    tape.accumulate_param_grads(*grads);
  }
  return loss.scalar();
}

Vector sample_latent(const Denoiser& model, const NoiseSchedule& schedule, const Vector* cond, std::uint64_t seed) {
  schedule.validate();
  if (static_cast<int>(schedule.steps()) != model.config().steps) {
    fail(ErrorKind::kConfig, "schedule length does not match the denoiser");
  }
  Vector z = schedule.sigmas[0] *
             vae::standard_normal(static_cast<std::size_t>(model.config().latent_dim), derive_seed(seed, 0x5a3));
  for (std::size_t t = schedule.steps(); t-- > 0;) z = step(model, z, t, cond);
  return z;
}

data::SkeletonSequence sample(const Denoiser& model, const vae::StVae& decoder, const NoiseSchedule& schedule,
                              const Vector* cond, std::uint64_t seed, std::size_t frames, double fps) {
  if (decoder.config().latent_dim != model.config().latent_dim) {
    fail(ErrorKind::kConfig, "denoiser and VAE latent sizes differ");
  }
  const Vector z = sample_latent(model, schedule, cond, seed);
  return decoder.decode(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), frames, fps);
}

}  // namespace skf::diffusion
