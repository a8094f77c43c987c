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

// Acceptance run: one PASS/FAIL line per criterion.
//
//   skelefusion_acceptance            all criteria
//   skelefusion_acceptance -c 6 -c 8  a subset

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "diffusion.hpp"
#include "metrics.hpp"
#include "skeleton_data.hpp"
#include "st_vae.hpp"
#include "test_support.hpp"
#include "trainer.hpp"

namespace fs = std::filesystem;
using namespace skf;
using data::ConfidenceMask;
using data::SkeletonSequence;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

SkeletonSequence random_sequence(std::size_t t, std::size_t j, std::uint64_t seed, double scale = 1.0) {
  const Matrix m = random_matrix(static_cast<Eigen::Index>(t * j), 2, seed, scale);
  return SkeletonSequence(t, j, 2, 30.0, std::vector<double>(m.data(), m.data() + m.size()));
}

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

vae::ModelConfig tiny_vae(int joints, int frames) {
  vae::ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_spatial_layers = 1;
  c.n_temporal_layers = 1;
  c.latent_dim = 4;
  c.joints = joints;
  c.max_frames = frames;
  c.ff_mult = 2;
  return c;
}

// Desk-scale stage-1 setup shared by the training criteria.
train::TrainConfig desk_config() {
  train::TrainConfig c;
  c.model.joints = 12;
  c.model.max_frames = 30;
  c.model.d_model = 32;
  c.model.latent_dim = 16;
  c.seq_len = 30;
  c.synth_count = 4;
  c.lr = 3e-3;
  c.batch_size = 2;
  c.steps = 2000;
  c.seed = 1;
  return c;
}

// ---------------------------------------------------------------------------

Outcome mask_blindness() {
  double worst = 0.0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const auto seed = static_cast<std::uint64_t>(trial);
    Rng rng(derive_seed(seed, 1));
    const std::size_t T = 3 + rng.below(3);
    const std::size_t J = 4 + rng.below(4);
    const vae::StVae model(tiny_vae(static_cast<int>(J), static_cast<int>(T)), derive_seed(seed, 2));

    const SkeletonSequence x = random_sequence(T, J, derive_seed(seed, 3));
    std::vector<std::uint8_t> m(T * J);
    for (auto& v : m) v = rng.uniform() < 0.3 ? 0 : 1;
    m[0] = 1;
    const ConfidenceMask mask(T, J, m);
    std::vector<double> other(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < T * J; ++i) {
      if (m[i]) continue;
      other[2 * i] += 10.0 * rng.normal();
      other[2 * i + 1] += 10.0 * rng.normal();
    }
    const SkeletonSequence y = x.with_data(std::move(other));

    const auto ex = model.encode(x, mask);
    const auto ey = model.encode(y, mask);
    worst = std::max({worst, (ex.mu - ey.mu).cwiseAbs().maxCoeff(),
                      (ex.log_sigma_sq - ey.log_sigma_sq).cwiseAbs().maxCoeff()});

    const SkeletonSequence recon = random_sequence(T, J, derive_seed(seed, 4));
    worst = std::max(worst, std::abs(vae::recon_loss_mse(recon, x, mask) - vae::recon_loss_mse(recon, y, mask)));
    worst = std::max(worst, std::abs(vae::recon_loss_l1(recon, x, mask) - vae::recon_loss_l1(recon, y, mask)));

    for (auto kind : {vae::ReconKind::kMse, vae::ReconKind::kL1}) {
      auto gx = model.params().zero_grads();
      auto gy = model.params().zero_grads();
      const auto lx = vae::vae_objective(model, {&x, &mask, &mask}, kind, 0.5, derive_seed(seed, 5), &gx);
      const auto ly = vae::vae_objective(model, {&y, &mask, &mask}, kind, 0.5, derive_seed(seed, 5), &gy);
      worst = std::max(worst, std::abs(lx.total - ly.total));
      for (std::size_t i = 0; i < gx.size(); ++i) worst = std::max(worst, max_abs(gx[i], gy[i]));
    }
  }
  return {worst <= 1e-12, std::to_string(trials) + " triples, max difference " + fmt("%.3g", worst)};
}

Outcome closed_form_losses() {
  const SkeletonSequence zero(1, 1, 2, 30.0, {0.0, 0.0});
  const SkeletonSequence ones(1, 1, 2, 30.0, {1.0, 1.0});
  const SkeletonSequence l1(1, 1, 2, 30.0, {1.0, -2.0});
  const auto on = ConfidenceMask::ones(1, 1);
  const auto off = ConfidenceMask::zeros(1, 1);
  auto dist = [](double mu, double log_var) {
    vae::LatentDistribution d;
    d.mu = Vector::Constant(1, mu);
    d.log_sigma_sq = Vector::Constant(1, log_var);
    return d;
  };
  vae::LatentDistribution standard;
  standard.mu = Vector::Zero(8);
  standard.log_sigma_sq = Vector::Zero(8);

  const std::vector<std::pair<double, double>> cases{
      {vae::recon_loss_mse(ones, ones, on), 0.0},
      {vae::recon_loss_mse(ones, zero, on), 2.0},
      {vae::recon_loss_mse(ones, zero, off), 0.0},
      {vae::recon_loss_l1(l1, l1, on), 0.0},
      {vae::recon_loss_l1(l1, zero, on), 3.0},
      {vae::recon_loss_l1(l1, zero, off), 0.0},
      {vae::kl_loss(standard), 0.0},
      {vae::kl_loss(dist(1.0, 0.0)), 0.5},
      {vae::kl_loss(dist(0.0, 1.0)), (std::exp(1.0) - 2.0) / 2.0},
      {vae::total_loss(2.0, 0.5, 1e-3), 2.0005},
      {vae::total_loss(2.0, 0.0, 0.7), 2.0},
      {vae::total_loss(2.0, 9.0, 0.0), 2.0},
  };
  double worst = 0.0;
  for (const auto& [got, want] : cases) worst = std::max(worst, std::abs(got - want));

  Rng rng(2024);
  double min_kl = INFINITY;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 1 + rng.below(32);
    vae::LatentDistribution d;
    d.mu.resize(static_cast<Eigen::Index>(n));
    d.log_sigma_sq.resize(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
      d.mu(static_cast<Eigen::Index>(k)) = 3.0 * rng.normal();
      d.log_sigma_sq(static_cast<Eigen::Index>(k)) = rng.uniform(-10.0, 10.0);
    }
    min_kl = std::min(min_kl, vae::kl_loss(d));
  }
  return {worst <= 1e-12 && min_kl >= 0.0,
          "max example error " + fmt("%.3g", worst) + ", min KL over 1e4 draws " + fmt("%.3g", min_kl)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;

  vae::StVae model(tiny_vae(5, 4), 7);
  const Matrix coords = random_matrix(4, 10, 30, 0.5);
  const SkeletonSequence x(4, 5, 2, 30.0, std::vector<double>(coords.data(), coords.data() + coords.size()));
  std::vector<std::uint8_t> m(20, 1);
  m[1] = m[6] = m[7] = 0;
  for (std::size_t j = 10; j < 15; ++j) m[j] = 0;
  const ConfidenceMask mask(4, 5, m);
  for (auto kind : {vae::ReconKind::kMse, vae::ReconKind::kL1}) {
    auto grads = model.params().zero_grads();
    vae::vae_objective(model, {&x, &mask, &mask}, kind, 0.5, 3, &grads);
    for (std::size_t s = 0; s < model.params().size(); ++s) {
      Matrix& value = model.params()[s].value;
      const Matrix numeric = testing::numeric_gradient(
          value, [&] { return vae::vae_objective(model, {&x, &mask, &mask}, kind, 0.5, 3, nullptr).total; });
      worst = std::max(worst, testing::max_relative_error(grads[s], numeric));
    }
  }

  diffusion::DenoiserConfig dc;
  dc.latent_dim = 4;
  dc.hidden = 6;
  dc.steps = 5;
  dc.cond_dim = 3;
  diffusion::Denoiser den(dc, 11);
  Rng rng(12);
  for (auto name : {"den.out.weight", "den.out.bias"}) {
    Matrix& w = den.params().at(name).value;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.3 * rng.normal();
  }
  const Matrix z0 = random_matrix(4, 1, 13);
  const auto traj = diffusion::build_trajectory(z0.col(0), diffusion::NoiseSchedule::geometric(5), 14);
  const Vector cond = random_matrix(3, 1, 15).col(0);
  for (const Vector* c : {static_cast<const Vector*>(nullptr), &cond}) {
    auto grads = den.params().zero_grads();
    diffusion::diffusion_loss(den, traj, c, &grads);
    for (std::size_t s = 0; s < den.params().size(); ++s) {
      Matrix& value = den.params()[s].value;
      const Matrix numeric =
          testing::numeric_gradient(value, [&] { return diffusion::diffusion_loss(den, traj, c, nullptr); });
      worst = std::max(worst, testing::max_relative_error(grads[s], numeric));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 60.0,
          "max relative error " + fmt("%.3g", worst) + ", " + fmt("%.1f", elapsed) + " s"};
}

Outcome fid_oracle() {
  auto stats = [](const Vector& mu, const Matrix& sigma) {
    metrics::GaussianStats s;
    s.mu = mu;
    s.sigma = sigma;
    s.n = 100;
    return s;
  };
  const Matrix one = Matrix::Identity(1, 1);
  const double e1 = std::abs(metrics::fid(stats(Vector::Zero(1), one), stats(Vector::Ones(1), one)) - 1.0);
  Vector mu(2);
  mu << 3.0, 4.0;
  const double e27 = std::abs(
      metrics::fid(stats(Vector::Zero(2), Matrix::Identity(2, 2)), stats(mu, 4.0 * Matrix::Identity(2, 2))) - 27.0);
  const auto s = metrics::gaussian_stats(random_matrix(60, 16, 5));
  const double self = metrics::fid(s, s);

  double residual = 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>((trial * 37) % 64);
    const Matrix g = random_matrix(k, k, 500 + trial);
    const Matrix a = g * g.transpose() + 1e-3 * Matrix::Identity(k, k);
    const Matrix r = metrics::psd_sqrt(a);
    residual = std::max(residual, (r * r - a).norm() / a.norm());
  }
  const bool pass = self < 1e-9 && e1 < 1e-9 && e27 < 1e-9 && residual < 1e-8;
  return {pass, "fid(s,s) " + fmt("%.3g", self) + ", analytic errors " + fmt("%.3g", e1) + " / " +
                    fmt("%.3g", e27) + ", max sqrt residual " + fmt("%.3g", residual) + " (100 matrices, k<=64)"};
}

Outcome diversity_oracle() {
  std::vector<SkeletonSequence> set;
  for (std::uint64_t i = 0; i < 8; ++i) set.push_back(random_sequence(10, 6, 40 + i, 1.0 + 0.5 * i));
  double brute = 0.0;
  for (const auto& x : set) {
    double mean[2] = {0.0, 0.0};
    for (std::size_t t = 0; t < x.frames(); ++t)
      for (std::size_t j = 0; j < x.joints(); ++j)
        for (std::size_t d = 0; d < 2; ++d) mean[d] += x.at(t, j, d) / 60.0;
    double acc = 0.0;
    for (std::size_t t = 0; t < x.frames(); ++t)
      for (std::size_t j = 0; j < x.joints(); ++j)
        for (std::size_t d = 0; d < 2; ++d) acc += (x.at(t, j, d) - mean[d]) * (x.at(t, j, d) - mean[d]);
    brute += acc / 120.0;
  }
  brute /= 8.0;
  const double d = metrics::diversity(set);
  const double err = std::abs(d - brute);

  std::vector<SkeletonSequence> same(4, set[0]);
  std::vector<SkeletonSequence> frozen;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> v(set[0].data().begin(), set[0].data().end());
    for (std::size_t t = 1; t < 10; ++t) std::copy_n(v.begin(), 12, v.begin() + static_cast<std::ptrdiff_t>(t * 12));
    for (std::size_t k = 0; k < v.size(); k += 2) {
      v[k] = 1.5;
      v[k + 1] = -0.5;
    }
    frozen.push_back(set[0].with_data(std::move(v)));
  }
  const double zero = metrics::diversity(frozen);

  bool scaling = true;
  for (double c : {2.0, 0.5, -4.0, 8.0}) {
    std::vector<SkeletonSequence> scaled;
    for (const auto& x : set) {
      std::vector<double> v(x.data().begin(), x.data().end());
      for (double& e : v) e *= c;
      scaled.push_back(x.with_data(std::move(v)));
    }
    scaling = scaling && metrics::diversity(scaled) == c * c * d;
  }
  const bool identical = metrics::diversity(same) == metrics::diversity({set[0]});
  return {err < 1e-10 && zero == 0.0 && scaling && identical,
          "brute-force error " + fmt("%.3g", err) + ", constant set " + fmt("%.3g", zero) +
              (scaling ? ", c^2 scaling exact" : ", c^2 scaling broken")};
}

// Trained checkpoints shared by criteria 6, 8 and 9.
struct Models {
  std::optional<train::Checkpoint> vae;
  double vae_seconds = 0.0;
  std::optional<train::Checkpoint> diffusion;
  double diffusion_initial = 0.0;
  double diffusion_final = 0.0;
  std::optional<train::Dataset> data;

  const train::Dataset& dataset() {
    if (!data) data = train::load_dataset(desk_config());
    return *data;
  }
  const train::Checkpoint& stage1() {
    if (!vae) {
      const auto t0 = Clock::now();
      vae = train::train_vae(desk_config(), dataset());
      vae_seconds = seconds_since(t0);
    }
    return *vae;
  }
  const train::Checkpoint& stage2() {
    if (!diffusion) {
      auto c = desk_config();
      c.stage = train::Stage::kDiffusion;
      const auto& v = stage1();
      const vae::StVae model = train::restore_vae(v);
      const diffusion::Denoiser fresh(c.denoiser(), derive_seed(c.seed, 0));
      diffusion_initial = train::diffusion_eval_loss(fresh, model, dataset(), c.schedule(), 99);
      diffusion = train::train_diffusion(c, dataset(), v);
      diffusion_final =
          train::diffusion_eval_loss(train::restore_denoiser(*diffusion), model, dataset(), c.schedule(), 99);
    }
    return *diffusion;
  }
};

Outcome overfit(Models& models) {
  const auto& ck = models.stage1();
  const vae::StVae model = train::restore_vae(ck);
  double mean = 0.0;
  for (const auto& ex : models.dataset().examples) {
    const auto recon = model.reconstruct(ex.sequence, ex.mask);
    const double visible = static_cast<double>(ex.mask.frames() * ex.mask.joints() - ex.mask.count_missing());
    mean += vae::recon_loss_mse(recon, ex.sequence, ex.mask) / visible;
  }
  mean /= static_cast<double>(models.dataset().size());
  bool finite = true;
  for (const auto& r : ck.history) finite = finite && std::isfinite(r.loss);
  // window-20 block means of the loss curve
  std::vector<double> blocks;
  for (std::size_t i = 0; i + 20 <= ck.history.size(); i += 20) {
    double s = 0.0;
    for (std::size_t k = i; k < i + 20; ++k) s += ck.history[k].loss / 20.0;
    blocks.push_back(s);
  }
  int rises = 0;
  for (std::size_t i = 1; i < blocks.size(); ++i) rises += blocks[i] > blocks[i - 1];
  return {mean < 1e-3 && models.vae_seconds < 300.0 && finite,
          "per-visible-joint MSE " + fmt("%.3g", mean) + " after " + std::to_string(ck.step) + " steps, " +
              fmt("%.1f", models.vae_seconds) + " s, smoothed loss " + fmt("%.4g", blocks.front()) + " -> " +
              fmt("%.4g", blocks.back()) + " with " + std::to_string(rises) + "/" +
              std::to_string(blocks.size() - 1) + " rising windows"};
}

Outcome table3_replica() {
  const std::vector<double> rates{0.05, 0.10, 0.15, 0.20};
  const std::vector<std::uint64_t> seeds{0, 1, 2};

  std::vector<SkeletonSequence> clean;
  for (std::uint64_t i = 0; i < 24; ++i) {
    const double bpm = 90.0 + 60.0 * static_cast<double>(i) / 23.0;
    clean.push_back(data::synth_dance(30, 12, bpm, 5000 + i).sequence);
  }

  std::map<std::pair<double, std::string>, std::vector<double>> fids;
  for (auto seed : seeds) {
    std::vector<std::optional<train::Pipeline>> pipes;
    for (bool use_mask : {true, false}) {
      auto c = desk_config();
      c.steps = 600;
      c.synth_count = 8;
      c.synth_seed = 300 + 10 * seed;
      c.seed = seed;
      c.use_mask = use_mask;
      c.corrupt_min = 0.05;
      c.corrupt_max = 0.20;
      pipes.emplace_back(train::Pipeline(train::train_vae(c, train::load_dataset(c))));
    }
    std::vector<metrics::SweepConfig> configs;
    configs.push_back({"masked", [&](const SkeletonSequence& x, const ConfidenceMask& m) {
                         return pipes[0]->reconstruct(x, m);
                       }});
    configs.push_back({"unmasked", [&](const SkeletonSequence& x, const ConfidenceMask& m) {
                         return pipes[1]->reconstruct(x, m);
                       }});
    metrics::SweepOptions opt;
    opt.rates = rates;
    opt.seeds = {seed};
    const auto report = metrics::robustness_sweep(clean, configs, opt);
    for (const auto& cell : report.cells) fids[{cell.rate, cell.config}].push_back(cell.fid);
  }

  bool wins = true;
  bool monotone = true;
  std::ostringstream detail;
  double prev = -INFINITY;
  for (double r : rates) {
    const auto& m = fids[{r, "masked"}];
    const auto& u = fids[{r, "unmasked"}];
    int better = 0;
    double um = 0.0, mm = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      better += m[i] < u[i];
      mm += m[i] / static_cast<double>(seeds.size());
      um += u[i] / static_cast<double>(seeds.size());
    }
    wins = wins && 2 * better > static_cast<int>(seeds.size());
    monotone = monotone && um >= prev;
    prev = um;
    detail << fmt("%.2f", r) << ": " << fmt("%.4g", mm) << " vs " << fmt("%.4g", um) << " (" << better << "/"
           << seeds.size() << "); ";
  }
  detail << (monotone ? "unmasked monotone" : "unmasked not monotone");
  return {wins && monotone, detail.str()};
}

Outcome diffusion_contracts(Models& models) {
  const auto schedule = diffusion::NoiseSchedule::geometric(50);
  const Vector z = random_matrix(16, 1, 3).col(0);
  const bool identity = diffusion::apply_step(z, Vector::Zero(16)) == z;

  const auto traj = diffusion::build_trajectory(z, schedule, 4);
  const double oracle = diffusion::trajectory_loss(traj, [&](const Vector& zt, std::size_t t) -> Vector {
    (void)zt;
    return traj.state(t + 1) - traj.state(t);
  });

  const auto& ck = models.stage2();
  const double ratio = models.diffusion_final / models.diffusion_initial;

  const train::Pipeline pipe(ck);
  const auto a = pipe.generate_unconditional(5, 30);
  const auto b = pipe.generate_unconditional(5, 30);
  const bool deterministic = a == b;
  return {identity && oracle == 0.0 && ratio < 0.5 && deterministic,
          std::string(identity ? "zero-residual step exact" : "zero-residual step broken") + ", oracle loss " +
              fmt("%.3g", oracle) + ", loss ratio " + fmt("%.3g", ratio) + " after " + std::to_string(ck.step) +
              " steps, sampler " + (deterministic ? "deterministic" : "not deterministic")};
}

Outcome generation_diversity(Models& models) {
  const train::Pipeline pipe(models.stage2());
  const auto dance = data::synth_dance(30, 12, 128.0, 777);
  std::vector<SkeletonSequence> gen;
  for (std::uint64_t s = 0; s < 8; ++s) gen.push_back(pipe.generate(dance.audio, dance.sample_rate, 1000 + s, 30));
  double min_pair = INFINITY;
  double max_pair = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    for (std::size_t j = i + 1; j < gen.size(); ++j) {
      double diff = 0.0;
      for (std::size_t k = 0; k < gen[i].data().size(); ++k)
        diff = std::max(diff, std::abs(gen[i].data()[k] - gen[j].data()[k]));
      min_pair = std::min(min_pair, diff);
      max_pair = std::max(max_pair, diff);
    }
  }
  const double div = metrics::diversity(gen);
  return {div > 0.0 && min_pair > 0.0,
          "Diversity " + fmt("%.4g", div) + ", pairwise max-abs difference " + fmt("%.3g", min_pair) + " .. " +
              fmt("%.3g", max_pair)};
}

// ---------------------------------------------------------------------------

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

// synth -> train(vae) -> corrupt -> reconstruct -> evaluate.
std::string cli_pipeline(const fs::path& cli, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string exe = quote(cli);
  for (int i = 0; i < 6; ++i) {
    const std::string name = "dance" + std::to_string(i);
    if (run(exe + " synth --frames 30 --joints 12 --bpm " + std::to_string(90 + 12 * i) + " --seed " +
            std::to_string(i) + " --name " + name + " --out " + quote(dir / "data")) != 0)
      return "synth failed";
  }
  {
    std::ofstream cfg(dir / "desk.cfg");
    cfg << "joints = 12\nseq_len = 30\nd_model = 32\nlatent_dim = 16\nn_heads = 4\n"
           "steps = 400\nlr = 3e-3\ncorrupt_min = 0.05\ncorrupt_max = 0.2\nseed = 1\n";
  }
  if (run(exe + " train --config " + quote(dir / "desk.cfg") + " --stage vae --data " + quote(dir / "data") +
          " --out " + quote(dir / "vae.ckpt") + " --log " + quote(dir / "vae.csv")) != 0)
    return "train failed";
  fs::create_directories(dir / "corrupt");
  fs::create_directories(dir / "recon");
  for (int i = 0; i < 6; ++i) {
    const std::string name = "dance" + std::to_string(i) + ".json";
    if (run(exe + " corrupt --in " + quote(dir / "data" / name) + " --rate 0.1 --pattern random-joint --seed " +
            std::to_string(20 + i) + " --out " + quote(dir / "corrupt" / name)) != 0)
      return "corrupt failed";
    if (run(exe + " reconstruct --ckpt " + quote(dir / "vae.ckpt") + " --in " + quote(dir / "corrupt" / name) +
            " --out " + quote(dir / "recon" / name)) != 0)
      return "reconstruct failed";
  }
  if (run(exe + " evaluate --metric fid --real " + quote(dir / "data") + " --gen " + quote(dir / "recon") +
          " --out " + quote(dir / "fid.csv")) != 0)
    return "evaluate fid failed";
  if (run(exe + " evaluate --metric diversity --gen " + quote(dir / "recon") + " --out " +
          quote(dir / "diversity.csv")) != 0)
    return "evaluate diversity failed";
  return {};
}

Outcome end_to_end(const fs::path& cli, const fs::path& work) {
  const fs::path dir = work / "pipeline";
  const auto t0 = Clock::now();
  const std::string e1 = cli_pipeline(cli, dir);
  const double first = seconds_since(t0);
  if (!e1.empty()) return {false, e1};
  const auto a = snapshot(dir);
  const std::string e2 = cli_pipeline(cli, dir);
  if (!e2.empty()) return {false, "rerun: " + e2};
  const auto b = snapshot(dir);
  const bool same = a == b;
  return {same && first < 600.0, std::to_string(a.size()) + " files, " +
                                     (same ? "byte-identical on rerun" : "rerun differs") + ", " +
                                     fmt("%.1f", first) + " s per run"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SkeleFusion acceptance run"};
  std::vector<int> only;
  std::string cli = SKF_CLI_PATH;
  std::string work = (fs::temp_directory_path() / "skelefusion_acceptance").string();
  app.add_option("-c,--criterion", only, "Run only these criteria (repeatable)")->check(CLI::Range(1, 10));
  app.add_option("--cli", cli, "Command-line binary for the end-to-end run");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  Models models;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"mask-blindness", mask_blindness},
      {"closed-form losses", closed_form_losses},
      {"gradient correctness", gradient_check},
      {"FID oracle", fid_oracle},
      {"Diversity oracle", diversity_oracle},
      {"VAE overfit", [&] { return overfit(models); }},
      {"masked vs unmasked FID sweep", table3_replica},
      {"diffusion contracts", [&] { return diffusion_contracts(models); }},
      {"generation diversity", [&] { return generation_diversity(models); }},
      {"end-to-end CLI pipeline", [&] { return end_to_end(cli, work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    failed += !out.pass;
    std::printf("criterion %2d %-30s %s  %s\n", id, criteria[i].first, out.pass ? "PASS" : "FAIL",
                out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
