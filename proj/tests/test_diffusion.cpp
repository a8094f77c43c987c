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

#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "diffusion.hpp"
#include "metrics.hpp"
#include "test_support.hpp"

using namespace skf;
using namespace skf::diffusion;
using skf::testing::max_relative_error;
using skf::testing::numeric_gradient;

namespace {

Vector random_vector(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.latent_dim = 4;
  c.hidden = 6;
  c.steps = 5;
  c.cond_dim = 3;
  return c;
}

void randomize_output(Denoiser& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto name : {"den.out.weight", "den.out.bias"}) {
    Matrix& m = model.params().at(name).value;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.3 * rng.normal();
  }
}

}  // namespace

TEST_CASE("geometric schedule") {
  const auto s = NoiseSchedule::geometric(50, 1.0, 0.01);
  REQUIRE(s.steps() == 50);
  CHECK(s.sigmas.front() == 1.0);
  CHECK(s.sigmas.back() == 0.01);
  for (std::size_t i = 1; i < 50; ++i) CHECK(s.sigmas[i] / s.sigmas[i - 1] == doctest::Approx(std::pow(0.01, 1.0 / 49)));
  CHECK(s.level(0) == 0.0);
  CHECK(s.level(1) == 0.01);
  CHECK(s.level(50) == 1.0);
  CHECK_THROWS_AS(NoiseSchedule::geometric(0), Error);
  CHECK_THROWS_AS((NoiseSchedule{{0.5, 0.7}}.validate()), Error);
}

TEST_CASE("trajectory construction") {
  const Vector z0 = random_vector(4, 1);
  NoiseSchedule zero{{0.0, 0.0, 0.0}};
  const auto flat = build_trajectory(z0, zero, 3);
  for (std::size_t t = 0; t <= 3; ++t) CHECK(flat.state(t) == z0);

  const auto s = NoiseSchedule::geometric(10);
  const auto a = build_trajectory(z0, s, 9);
  const auto b = build_trajectory(z0, s, 9);
  CHECK(a.states == b.states);
  CHECK(a.state(0) == z0);
  CHECK(build_trajectory(z0, s, 10).states != a.states);
  // one shared noise direction, scaled by the level
  const Vector eps = (a.state(10) - z0) / s.level(10);
  for (std::size_t t = 1; t <= 10; ++t) CHECK((a.state(t) - (z0 + s.level(t) * eps)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero-initialised output layer gives zero residual") {
  const Denoiser model(tiny_config(), 2);
  const Vector cond = random_vector(3, 3);
  for (std::size_t t = 0; t < 5; ++t) {
    const Vector z = random_vector(4, 10 + t);
    CHECK(model.residual(z, t, nullptr).cwiseAbs().maxCoeff() == 0.0);
    CHECK(model.residual(z, t, &cond).cwiseAbs().maxCoeff() == 0.0);
    CHECK(step(model, z, t, &cond) == z);
  }
}

TEST_CASE("step arithmetic") {
  const Vector z = random_vector(5, 4);
  CHECK(apply_step(z, Vector::Zero(5)) == z);
  CHECK(apply_step(z, z) == Vector::Zero(5));
  CHECK_THROWS_AS(apply_step(z, Vector::Zero(4)), Error);
}

TEST_CASE("trajectory loss") {
  const auto s = NoiseSchedule::geometric(8);
  const auto traj = build_trajectory(random_vector(4, 5), s, 6);
  // residual reproducing the increments exactly
  auto oracle = [&](const Vector& z, std::size_t t) -> Vector { return z - traj.state(t); };
  CHECK(trajectory_loss(traj, oracle) == 0.0);

  double plug_in = 0.0;
  for (std::size_t t = 0; t < 8; ++t) plug_in += (traj.state(t + 1) - traj.state(t)).squaredNorm();
  auto zero = [](const Vector& z, std::size_t) -> Vector { return Vector::Zero(z.size()); };
  CHECK(trajectory_loss(traj, zero) == doctest::Approx(plug_in).epsilon(1e-15));

  DenoiserConfig c = tiny_config();
  c.steps = 8;
  Denoiser model(c, 7);
  CHECK(diffusion_loss(model, traj, nullptr, nullptr) == doctest::Approx(plug_in).epsilon(1e-14));
  randomize_output(model, 8);
  auto net = [&](const Vector& z, std::size_t t) { return model.residual(z, t, nullptr); };
  CHECK(diffusion_loss(model, traj, nullptr, nullptr) == doctest::Approx(trajectory_loss(traj, net)).epsilon(1e-12));
}

TEST_CASE("tiny denoiser gradients match central differences") {
  Denoiser model(tiny_config(), 11);
  randomize_output(model, 12);
  const auto traj = build_trajectory(random_vector(4, 13), NoiseSchedule::geometric(5), 14);
  const Vector cond = random_vector(3, 15);
  for (const Vector* c : {static_cast<const Vector*>(nullptr), &cond}) {
    auto grads = model.params().zero_grads();
    diffusion_loss(model, traj, c, &grads);
    for (std::size_t s = 0; s < model.params().size(); ++s) {
      Matrix& value = model.params()[s].value;
      const Matrix numeric = numeric_gradient(value, [&]() { return diffusion_loss(model, traj, c, nullptr); });
      INFO(model.params()[s].name);
      CHECK(max_relative_error(grads[s], numeric) < 1e-4);
    }
  }
}

TEST_CASE("sampler") {
  DenoiserConfig c = tiny_config();
  const auto s = NoiseSchedule::geometric(5);
  Denoiser model(c, 16);
  vae::ModelConfig vc;
  vc.d_model = 8;
  vc.n_heads = 2;
  vc.n_spatial_layers = 1;
  vc.n_temporal_layers = 1;
  vc.latent_dim = 4;
  vc.joints = 5;
  vc.max_frames = 6;
  const vae::StVae decoder(vc, 17);

  // zero residual: the output is the decoded starting noise
  const Vector z_start = s.sigmas[0] * vae::standard_normal(4, derive_seed(21, 0x5a3));
  CHECK(sample_latent(model, s, nullptr, 21) == z_start);
  const auto out = sample(model, decoder, s, nullptr, 21, 6);
  CHECK(out == decoder.decode(std::span<const double>(z_start.data(), 4), 6));

  randomize_output(model, 18);
  const Vector cond = random_vector(3, 19);
  const auto a = sample(model, decoder, s, &cond, 22, 6);
  const auto b = sample(model, decoder, s, &cond, 22, 6);
  CHECK(a == b);
  const auto other = sample(model, decoder, s, &cond, 23, 6);
  CHECK(metrics::diversity({a, other}) > 0.0);
  CHECK(sample_latent(model, s, &cond, 22) != sample_latent(model, s, nullptr, 22));

  CHECK_THROWS_AS(sample_latent(model, NoiseSchedule::geometric(4), nullptr, 1), Error);
}

TEST_CASE("conditioning vector") {
  Vector p(3);
  p << 0.0, 2.0, -5.0;
  const Vector c = condition_vector(p);
  CHECK(c(0) == 0.0);
  CHECK(c(1) == doctest::Approx(std::log(3.0)));
  CHECK(c(2) == doctest::Approx(-std::log(6.0)));
}
