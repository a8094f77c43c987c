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

#include "metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <sstream>

#include "common.hpp"

namespace skf::metrics {

using data::SkeletonSequence;

Vector feature_embed(const SkeletonSequence& x) {
  if (x.frames() < 2) fail(ErrorKind::kLength, "feature_embed: velocity needs at least 2 frames");
  const std::size_t jd = x.joints() * x.dims();
  const auto frames = static_cast<double>(x.frames());
  const auto steps = static_cast<double>(x.frames() - 1);
  Vector f = Vector::Zero(static_cast<Eigen::Index>(3 * jd));
  const double* d = x.data().data();
  for (std::size_t i = 0; i < jd; ++i) {
    double pos = 0.0;
    for (std::size_t t = 0; t < x.frames(); ++t) pos += d[t * jd + i];
    double vel = 0.0;
    for (std::size_t t = 1; t < x.frames(); ++t) vel += d[t * jd + i] - d[(t - 1) * jd + i];
    const double vmean = vel / steps;
    double vvar = 0.0;
    for (std::size_t t = 1; t < x.frames(); ++t) {
      const double dv = d[t * jd + i] - d[(t - 1) * jd + i] - vmean;
      vvar += dv * dv;
    }
    f(static_cast<Eigen::Index>(i)) = pos / frames;
    f(static_cast<Eigen::Index>(jd + i)) = vmean;
    f(static_cast<Eigen::Index>(2 * jd + i)) = std::sqrt(vvar / steps);
  }
  return f;
}

Vector latent_embed(const vae::StVae& model, const SkeletonSequence& x) {
  return model.encode(x, data::ConfidenceMask::ones(x.frames(), x.joints())).mu;
}

std::string feature_space_name(FeatureSpace space) {
  return space == FeatureSpace::kDescriptor ? "descriptor" : "vae-latent";
}

Matrix embed_all(const std::vector<SkeletonSequence>& xs, FeatureSpace space, const vae::StVae* model) {
  if (xs.empty()) fail(ErrorKind::kSampleSize, "no sequences to embed");
  if (space == FeatureSpace::kLatent && model == nullptr) {
    fail(ErrorKind::kConfig, "latent feature space needs a trained VAE");
  }
  auto embed = [&](const SkeletonSequence& x) {
    return space == FeatureSpace::kDescriptor ? feature_embed(x) : latent_embed(*model, x);
  };
  const Vector first = embed(xs[0]);
  Matrix out(static_cast<Eigen::Index>(xs.size()), first.size());
  out.row(0) = first.transpose();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const Vector f = embed(xs[i]);
    if (f.size() != first.size()) fail(ErrorKind::kDimension, "sequences embed to different feature sizes");
    out.row(static_cast<Eigen::Index>(i)) = f.transpose();
  }
  return out;
}

GaussianStats gaussian_stats(const Matrix& features) {
  const auto n = features.rows();
  const auto k = features.cols();
  if (n < 2) fail(ErrorKind::kSampleSize, "gaussian_stats needs at least 2 samples, got " + std::to_string(n));
  GaussianStats s;
  s.n = static_cast<std::size_t>(n);
  s.mu = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  if (n < k) s.sigma.diagonal().array() += kShrinkage;
  return s;
}

Matrix psd_sqrt(const Matrix& a) {
  if (a.rows() != a.cols()) fail(ErrorKind::kDimension, "psd_sqrt needs a square matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    fail(ErrorKind::kSymmetry, "psd_sqrt input is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  Matrix out = v * roots.asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

double fid(const GaussianStats& r, const GaussianStats& g) {
  if (r.mu.size() != g.mu.size() || r.sigma.rows() != g.sigma.rows()) {
    fail(ErrorKind::kDimension, "fid: feature sizes differ (" + std::to_string(r.mu.size()) + " vs " +
                                    std::to_string(g.mu.size()) + ")");
  }
  const Matrix root_r = psd_sqrt(r.sigma);
  Matrix s = root_r * g.sigma * root_r;
  s = 0.5 * (s + s.transpose());
  const double cross = psd_sqrt(s).trace();
  const double value = (r.mu - g.mu).squaredNorm() + r.sigma.trace() + g.sigma.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

double fid(const std::vector<SkeletonSequence>& real, const std::vector<SkeletonSequence>& gen, FeatureSpace space,
           const vae::StVae* model) {
  return fid(gaussian_stats(embed_all(real, space, model)), gaussian_stats(embed_all(gen, space, model)));
}

double diversity(const std::vector<SkeletonSequence>& xs) {
  if (xs.empty()) fail(ErrorKind::kSampleSize, "diversity needs at least one sequence");
  double total = 0.0;
  for (const auto& x : xs) {
    if (x.frames() != xs[0].frames() || x.joints() != xs[0].joints() || x.dims() != xs[0].dims()) {
      fail(ErrorKind::kShape, "diversity: sequences have different shapes");
    }
    const std::size_t dims = x.dims();
    std::vector<double> mean(dims, 0.0);
    const std::size_t points = x.frames() * x.joints();
    for (std::size_t p = 0; p < points; ++p) {
      for (std::size_t d = 0; d < dims; ++d) mean[d] += x.data()[p * dims + d];
    }
    for (auto& m : mean) m /= static_cast<double>(points);
    double var = 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double dev = x.data()[p * dims + d] - mean[d];
        var += dev * dev;
      }
    }
    total += var / static_cast<double>(points * dims);
  }
  return total / static_cast<double>(xs.size());
}

double SweepReport::mean_fid(double rate, const std::string& config) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.rate == rate && c.config == config) {
      sum += c.fid;
      ++n;
    }
  }
  if (n == 0) fail(ErrorKind::kInvalidArgument, "no sweep cells for config '" + config + "'");
  return sum / static_cast<double>(n);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// (rate, config) pairs in report order.
std::vector<std::pair<double, std::string>> groups(const std::vector<SweepCell>& cells) {
  std::vector<std::pair<double, std::string>> out;
  for (const auto& c : cells) {
    std::pair<double, std::string> key{c.rate, c.config};
    if (std::find(out.begin(), out.end(), key) == out.end()) out.push_back(key);
  }
  return out;
}

}  // namespace

std::string SweepReport::csv() const {
  std::ostringstream out;
  out << "rate,config,fid\n";
  for (const auto& [rate, config] : groups(cells)) {
    out << format_double(rate) << ',' << config << ',' << format_double(mean_fid(rate, config)) << '\n';
  }
  return out.str();
}

std::string SweepReport::json() const {
  nlohmann::ordered_json doc;
  doc["feature_space"] = feature_space_name(space);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& [rate, config] : groups(cells)) {
    nlohmann::ordered_json row;
    row["rate"] = rate;
    row["config"] = config;
    row["fid"] = mean_fid(rate, config);
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    for (const auto& c : cells) {
      if (c.rate == rate && c.config == config) per_seed.push_back({{"seed", c.seed}, {"fid", c.fid}});
    }
    row["per_seed"] = std::move(per_seed);
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

SweepReport robustness_sweep(const std::vector<SkeletonSequence>& clean, const std::vector<SweepConfig>& configs,
                             const SweepOptions& options) {
  if (clean.size() < 2) fail(ErrorKind::kSampleSize, "sweep needs at least 2 clean sequences");
  if (configs.empty()) fail(ErrorKind::kConfig, "sweep needs at least one reconstruction config");
  for (const auto& c : configs) {
    if (!c.reconstruct) fail(ErrorKind::kConfig, "sweep config '" + c.name + "' has no model");
  }
  for (double r : options.rates) {
    if (!(r >= 0.0 && r <= 1.0)) fail(ErrorKind::kInvalidArgument, "missing rate outside [0, 1]");
  }
  const GaussianStats reference = gaussian_stats(embed_all(clean, options.space, options.feature_model));

  SweepReport report;
  report.space = options.space;
  for (double rate : options.rates) {
    for (const auto& c : configs) {
      for (auto seed : options.seeds) report.cells.push_back({rate, c.name, seed, 0.0});
    }
  }
  const std::size_t per_rate = configs.size() * options.seeds.size();
  parallel_for(report.cells.size(), [&](std::size_t i) {
    SweepCell& cell = report.cells[i];
    const SweepConfig& config = configs[(i % per_rate) / options.seeds.size()];
    std::vector<SkeletonSequence> recon;
    recon.reserve(clean.size());
    for (std::size_t s = 0; s < clean.size(); ++s) {
      data::CorruptionSpec spec{cell.rate, options.pattern, derive_seed(cell.seed, s)};
      const auto corrupted = data::inject_occlusions(clean[s], spec);
      recon.push_back(config.reconstruct(corrupted.sequence, corrupted.mask));
    }
    cell.fid = fid(reference, gaussian_stats(embed_all(recon, options.space, options.feature_model)));
  });
  return report;
}

}  // namespace skf::metrics
