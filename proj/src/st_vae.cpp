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

#include "st_vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "common.hpp"

namespace skf::vae {

using data::ConfidenceMask;
using data::SkeletonSequence;

void ModelConfig::validate() const {
  if (d_model < 1 || n_spatial_layers < 1 || n_temporal_layers < 1 || n_heads < 1 || latent_dim < 1 ||
      joints < 1 || max_frames < 1 || ff_mult < 1) {
    fail(ErrorKind::kConfig, "model config: all counts must be >= 1");
  }
  if (d_model % n_heads != 0) fail(ErrorKind::kConfig, "model config: d_model must be divisible by n_heads");
  if (dims != 2 && dims != 3) fail(ErrorKind::kConfig, "model config: dims must be 2 or 3");
}

StVae::StVae(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  nn::Initializer init(derive_seed(init_seed, 0x7ae));
  const Eigen::Index d = config_.d_model;
  const double d_fan = static_cast<double>(d);

  embed_ = nn::Linear::create(params_, init, "embed.coords", config_.dims, d);
  mask_token_ = params_.add("embed.mask_token", init.uniform(1, d, d_fan));
  joint_pos_ = params_.add("embed.joint_pos", init.uniform(config_.joints, d, d_fan));
  frame_pos_ = params_.add("embed.frame_pos", init.uniform(config_.max_frames, d, d_fan));
  for (int i = 0; i < config_.n_spatial_layers; ++i) {
    spatial_.push_back(nn::TransformerBlock::create(params_, init, "enc.spatial." + std::to_string(i), d,
                                                    config_.n_heads, config_.ff_mult));
  }
  spatial_norm_ = nn::LayerNorm::create(params_, init, "enc.spatial.norm", d);
  temporal_pos_ = params_.add("enc.temporal.pos", init.uniform(config_.max_frames, d, d_fan));
  for (int i = 0; i < config_.n_temporal_layers; ++i) {
    temporal_.push_back(nn::TransformerBlock::create(params_, init, "enc.temporal." + std::to_string(i), d,
                                                     config_.n_heads, config_.ff_mult));
  }
  temporal_norm_ = nn::LayerNorm::create(params_, init, "enc.temporal.norm", d);
  mu_head_ = nn::Linear::create(params_, init, "enc.mu", d, config_.latent_dim);
  log_var_head_ = nn::Linear::create(params_, init, "enc.log_var", d, config_.latent_dim);

  latent_in_ = nn::Linear::create(params_, init, "dec.latent_in", config_.latent_dim, d);
  decoder_pos_ = params_.add("dec.pos", init.uniform(config_.max_frames, d, d_fan));
  for (int i = 0; i < config_.n_temporal_layers; ++i) {
    decoder_.push_back(nn::TransformerBlock::create(params_, init, "dec.temporal." + std::to_string(i), d,
                                                    config_.n_heads, config_.ff_mult));
  }
  decoder_norm_ = nn::LayerNorm::create(params_, init, "dec.norm", d);
  joint_head_ = nn::Linear::create(params_, init, "dec.joint_head", d,
                                   static_cast<Eigen::Index>(config_.joints) * config_.dims);
}

void StVae::check_input(const SkeletonSequence& x, const ConfidenceMask& mask) const {
  data::check_same_shape(x, mask);
  if (static_cast<int>(x.joints()) != config_.joints || static_cast<int>(x.dims()) != config_.dims) {
    fail(ErrorKind::kConfig, "sequence has J=" + std::to_string(x.joints()) + ", D=" + std::to_string(x.dims()) +
                                 " but the model expects J=" + std::to_string(config_.joints) +
                                 ", D=" + std::to_string(config_.dims));
  }
  if (static_cast<int>(x.frames()) > config_.max_frames) {
    fail(ErrorKind::kConfig, "sequence has " + std::to_string(x.frames()) + " frames, model max is " +
                                 std::to_string(config_.max_frames));
  }
}

ad::Var StVae::embed_joints(ad::Tape& tape, ad::Var coords, const ConfidenceMask& mask) const {
  const auto frames = static_cast<int>(mask.frames());
  const auto joints = static_cast<int>(mask.joints());
  if (joints != config_.joints || frames > config_.max_frames) {
    fail(ErrorKind::kConfig, "embed_joints: grid " + std::to_string(frames) + "x" + std::to_string(joints) +
                                 " exceeds the model configuration");
  }
  if (coords.rows() != static_cast<Eigen::Index>(frames) * joints || coords.cols() != config_.dims) {
    fail(ErrorKind::kShape, "embed_joints: coordinate matrix shape mismatch");
  }
  std::vector<int> joint_index(static_cast<std::size_t>(frames * joints));
  std::vector<int> frame_index(joint_index.size());
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < joints; ++j) {
      joint_index[static_cast<std::size_t>(t * joints + j)] = j;
      frame_index[static_cast<std::size_t>(t * joints + j)] = t;
    }
  }
  ad::Var coord_term = embed_(tape, params_, coords);
  std::vector<std::uint8_t> keep(mask.values().begin(), mask.values().end());
  ad::Var tokens = ad::select_rows(coord_term, std::move(keep), params_.bind(tape, mask_token_));
  tokens = ad::add(tokens, ad::gather_rows(params_.bind(tape, joint_pos_), std::move(joint_index)));
  return ad::add(tokens, ad::gather_rows(params_.bind(tape, frame_pos_), std::move(frame_index)));
}

ad::Var StVae::spatial_encode(ad::Tape& tape, ad::Var tokens, const ConfidenceMask& mask) const {
  ad::AttentionLayout layout;
  layout.block = static_cast<Eigen::Index>(mask.joints());
  layout.heads = config_.n_heads;
  layout.key_visible.assign(mask.values().begin(), mask.values().end());
  ad::Var x = tokens;
  for (const auto& block : spatial_) x = block(tape, params_, x, layout);
  return spatial_norm_(tape, params_, x);
}

ad::Var StVae::frame_tokens(ad::Tape& tape, ad::Var spatial, const ConfidenceMask& mask) const {
  const auto frames = static_cast<Eigen::Index>(mask.frames());
  const auto joints = static_cast<Eigen::Index>(mask.joints());
  Matrix pool = Matrix::Zero(frames, frames * joints);
  Matrix empty = Matrix::Zero(frames, 1);
  bool any_empty = false;
  for (Eigen::Index t = 0; t < frames; ++t) {
    std::size_t present = 0;
    for (Eigen::Index j = 0; j < joints; ++j) present += mask.present(static_cast<std::size_t>(t), static_cast<std::size_t>(j));
    if (present == 0) {
      empty(t, 0) = 1.0;
      any_empty = true;
      continue;
    }
    for (Eigen::Index j = 0; j < joints; ++j) {
      if (mask.present(static_cast<std::size_t>(t), static_cast<std::size_t>(j))) {
        pool(t, t * joints + j) = 1.0 / static_cast<double>(present);
      }
    }
  }
  ad::Var out = ad::matmul(tape.constant(std::move(pool)), spatial);
  if (any_empty) out = ad::add(out, ad::matmul(tape.constant(std::move(empty)), params_.bind(tape, mask_token_)));
  return out;
}

ad::Var StVae::temporal_encode(ad::Tape& tape, ad::Var frames) const {
  const auto t = static_cast<int>(frames.rows());
  if (t > config_.max_frames) fail(ErrorKind::kConfig, "temporal_encode: too many frames");
  std::vector<int> index(static_cast<std::size_t>(t));
  std::iota(index.begin(), index.end(), 0);
  ad::Var x = ad::add(frames, ad::gather_rows(params_.bind(tape, temporal_pos_), std::move(index)));
  ad::AttentionLayout layout;
  layout.block = t;
  layout.heads = config_.n_heads;
  for (const auto& block : temporal_) x = block(tape, params_, x, layout);
  return temporal_norm_(tape, params_, x);
}

ad::Var StVae::pool(ad::Tape& tape, ad::Var encoded) const {
  const auto t = encoded.rows();
  return ad::matmul(tape.constant(Matrix::Constant(1, t, 1.0 / static_cast<double>(t))), encoded);
}

StVae::Encoded StVae::encode(ad::Tape& tape, ad::Var coords, const ConfidenceMask& mask) const {
  ad::Var tokens = embed_joints(tape, coords, mask);
  ad::Var spatial = spatial_encode(tape, tokens, mask);
  ad::Var summary = pool(tape, temporal_encode(tape, frame_tokens(tape, spatial, mask)));
  return {mu_head_(tape, params_, summary), log_var_head_(tape, params_, summary)};
}

ad::Var StVae::decode(ad::Tape& tape, ad::Var z, std::size_t frames) const {
  if (frames < 1 || static_cast<int>(frames) > config_.max_frames) {
    fail(ErrorKind::kConfig, "decode: frame count " + std::to_string(frames) + " outside [1, " +
                                 std::to_string(config_.max_frames) + "]");
  }
  if (z.rows() != 1 || z.cols() != config_.latent_dim) fail(ErrorKind::kShape, "decode: latent shape mismatch");
  const auto t = static_cast<Eigen::Index>(frames);
  ad::Var h = latent_in_(tape, params_, z);
  ad::Var x = ad::matmul(tape.constant(Matrix::Ones(t, 1)), h);
  std::vector<int> index(frames);
  std::iota(index.begin(), index.end(), 0);
  x = ad::add(x, ad::gather_rows(params_.bind(tape, decoder_pos_), std::move(index)));
  ad::AttentionLayout layout;
  layout.block = t;
  layout.heads = config_.n_heads;
  for (const auto& block : decoder_) x = block(tape, params_, x, layout);
  return joint_head_(tape, params_, decoder_norm_(tape, params_, x));
}

LatentDistribution StVae::encode(const SkeletonSequence& x, const ConfidenceMask& mask) const {
  check_input(x, mask);
  ad::Tape tape(false);
  const auto masked = data::apply_mask(x, mask);
  auto enc = encode(tape, tape.constant(coordinate_matrix(masked)), mask);
  return {enc.mu.value().row(0).transpose(), enc.log_var.value().row(0).transpose()};
}

SkeletonSequence StVae::decode(std::span<const double> z, std::size_t frames, double fps) const {
  if (static_cast<int>(z.size()) != config_.latent_dim) fail(ErrorKind::kShape, "decode: latent size mismatch");
  for (double v : z) {
    if (!std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "decode: latent must be finite");
  }
  ad::Tape tape(false);
  Matrix zm = Eigen::Map<const Matrix>(z.data(), 1, static_cast<Eigen::Index>(z.size()));
  const Matrix& out = decode(tape, tape.constant(std::move(zm)), frames).value();
  std::vector<double> values(out.data(), out.data() + out.size());
  return SkeletonSequence(frames, static_cast<std::size_t>(config_.joints), static_cast<std::size_t>(config_.dims),
                          fps, std::move(values));
}

SkeletonSequence StVae::reconstruct(const SkeletonSequence& x, const ConfidenceMask& mask) const {
  const auto dist = encode(x, mask);
  auto out = decode(std::span<const double>(dist.mu.data(), static_cast<std::size_t>(dist.mu.size())), x.frames(),
                    x.fps());
  return SkeletonSequence(out.frames(), out.joints(), out.dims(), out.fps(),
                          std::vector<double>(out.data().begin(), out.data().end()), x.parents());
}

Matrix coordinate_matrix(const SkeletonSequence& x) {
  return Eigen::Map<const Matrix>(x.data().data(), static_cast<Eigen::Index>(x.frames() * x.joints()),
                                  static_cast<Eigen::Index>(x.dims()));
}

Matrix mask_weights(const ConfidenceMask& mask) {
  Matrix w(static_cast<Eigen::Index>(mask.frames()), static_cast<Eigen::Index>(mask.joints()));
  for (std::size_t i = 0; i < mask.values().size(); ++i) w.data()[i] = mask.values()[i];
  return w;
}

Vector standard_normal(std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xe95));
  Vector eps(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
  return eps;
}

namespace {

double sigma_of(double log_var) {
  if (log_var == -std::numeric_limits<double>::infinity()) return 0.0;
  return std::exp(0.5 * std::clamp(log_var, kLogVarMin, kLogVarMax));
}

void check_dist(const LatentDistribution& dist) {
  if (dist.mu.size() != dist.log_sigma_sq.size()) fail(ErrorKind::kShape, "latent mu/log-variance size mismatch");
}

double recon_loss(const SkeletonSequence& recon, const SkeletonSequence& gt, const ConfidenceMask& mask, bool squared) {
  if (recon.frames() != gt.frames() || recon.joints() != gt.joints() || recon.dims() != gt.dims()) {
    fail(ErrorKind::kShape, "reconstruction and ground truth shapes differ");
  }
  data::check_same_shape(gt, mask);
  double total = 0.0;
  for (std::size_t t = 0; t < gt.frames(); ++t) {
    for (std::size_t j = 0; j < gt.joints(); ++j) {
      double joint = 0.0;
      for (std::size_t d = 0; d < gt.dims(); ++d) {
        const double diff = recon.at(t, j, d) - gt.at(t, j, d);
        joint += squared ? diff * diff : std::abs(diff);
      }
      total += mask.present(t, j) ? joint : 0.0;
    }
  }
  return total;
}

}  // namespace

Vector reparameterize(const LatentDistribution& dist, std::uint64_t seed) {
  check_dist(dist);
  const Vector eps = standard_normal(static_cast<std::size_t>(dist.mu.size()), seed);
  Vector z(dist.mu.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = dist.mu(i) + sigma_of(dist.log_sigma_sq(i)) * eps(i);
  return z;
}

double recon_loss_mse(const SkeletonSequence& recon, const SkeletonSequence& gt, const ConfidenceMask& mask) {
  return recon_loss(recon, gt, mask, true);
}

double recon_loss_l1(const SkeletonSequence& recon, const SkeletonSequence& gt, const ConfidenceMask& mask) {
  return recon_loss(recon, gt, mask, false);
}

double kl_loss(const LatentDistribution& dist) {
  check_dist(dist);
  double total = 0.0;
  for (Eigen::Index i = 0; i < dist.mu.size(); ++i) {
    const double lv = std::clamp(dist.log_sigma_sq(i), kLogVarMin, kLogVarMax);
    total += 1.0 + lv - dist.mu(i) * dist.mu(i) - std::exp(lv);
  }
  return -0.5 * total;
}

double total_loss(double recon, double kl, double beta) {
  if (!(beta >= 0.0)) fail(ErrorKind::kInvalidArgument, "beta must be >= 0");
  return recon + beta * kl;
}

LossBreakdown vae_objective(const StVae& model, const VaeSample& sample, ReconKind kind, double beta,
                            std::uint64_t noise_seed, std::vector<Matrix>* grads) {
  const SkeletonSequence& target = *sample.target;
  model.check_input(target, *sample.input_mask);
  data::check_same_shape(target, *sample.loss_mask);
  if (!(beta >= 0.0)) fail(ErrorKind::kInvalidArgument, "beta must be >= 0");

  ad::Tape tape(grads != nullptr);
  const auto masked = data::apply_mask(target, *sample.input_mask);
  auto enc = model.encode(tape, tape.constant(coordinate_matrix(masked)), *sample.input_mask);
  const auto latent = static_cast<std::size_t>(model.config().latent_dim);
  Matrix eps = standard_normal(latent, noise_seed).transpose();
  ad::Var sigma = ad::exp(ad::scale(ad::clamp(enc.log_var, kLogVarMin, kLogVarMax), 0.5));
  ad::Var z = ad::add(enc.mu, ad::hadamard(sigma, tape.constant(std::move(eps))));
  ad::Var recon = model.decode(tape, z, target.frames());

  const Matrix gt = Eigen::Map<const Matrix>(target.data().data(), static_cast<Eigen::Index>(target.frames()),
                                             static_cast<Eigen::Index>(target.joints() * target.dims()));
  const Matrix weights = mask_weights(*sample.loss_mask);
  ad::Var recon_loss = kind == ReconKind::kMse ? ad::weighted_squared_error(recon, gt, weights)
                                               : ad::weighted_abs_error(recon, gt, weights);
  ad::Var kl = ad::kl_standard_normal(enc.mu, enc.log_var, kLogVarMin, kLogVarMax);
  ad::Var total = ad::add(recon_loss, ad::scale(kl, beta));
  if (grads) {
    tape.backward(total);
    tape.accumulate_param_grads(*grads);
  }
  LossBreakdown out;
  out.total = total.scalar();
  out.recon = recon_loss.scalar();
  out.kl = kl.scalar();
  const auto present = sample.loss_mask->count_present();
  out.recon_per_joint = present ? out.recon / static_cast<double>(present) : 0.0;
  return out;
}

}  // namespace skf::vae
