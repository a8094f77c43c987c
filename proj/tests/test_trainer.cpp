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
#include <filesystem>
#include <fstream>
#include <iterator>

#include "common.hpp"
#include "trainer.hpp"

using namespace skf;
using namespace skf::train;

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# tiny model
joints = 6
seq_len = 8
d_model = 8
n_heads = 2
n_spatial_layers = 1
n_temporal_layers = 1
latent_dim = 4
ff_mult = 2
synth_count = 3
batch_size = 2
steps = 12
warmup_steps = 3
lr = 3e-3
corrupt_min = 0.05
corrupt_max = 0.2
denoiser_hidden = 8
diffusion_steps = 6
)";

TrainConfig tiny() {
  TrainConfig c;
  apply_config_text(c, kTiny);
  return c;
}

std::string temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "skf_trainer_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIo;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) { std::ofstream(path, std::ios::binary) << bytes; }

std::vector<double> losses(const Checkpoint& ck) {
  std::vector<double> out;
  for (const auto& r : ck.history) out.push_back(r.loss);
  return out;
}

}  // namespace

TEST_CASE("config text parsing") {
  const TrainConfig c = tiny();
  CHECK(c.model.joints == 6);
  CHECK(c.seq_len == 8);
  CHECK(c.model.max_frames == 8);
  CHECK(c.lr == 3e-3);
  CHECK(c.use_mask);

  TrainConfig j;
  apply_config_text(j, R"({"stage": "diffusion", "use_mask": false, "beta": 0.01, "loss_kind": "l1", "seed": 42})");
  CHECK(j.stage == Stage::kDiffusion);
  CHECK_FALSE(j.use_mask);
  CHECK(j.beta == 0.01);
  CHECK(j.loss_kind == vae::ReconKind::kL1);
  CHECK(j.seed == 42);

  TrainConfig e;
  CHECK(kind_of([&] { apply_config_text(e, "colour = blue"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config_text(e, "lr = fast"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config_text(e, "stage = both"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config_text(e, "{\"lr\": "); }) == ErrorKind::kParse);

  TrainConfig bad = tiny();
  bad.lr = 0.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
  bad = tiny();
  bad.seq_len = 1;
  bad.model.max_frames = 1;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
  bad = tiny();
  bad.epochs = 0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("config json round trip") {
  TrainConfig c = tiny();
  c.seed = 123456789012345ULL;
  c.beta = 0.1 + 0.2;
  c.corrupt_pattern = data::OcclusionPattern::kTemporalBurst;
  c.data_dir = "some/dir";
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.seed == c.seed);
  CHECK(back.beta == c.beta);
  CHECK(back.model == c.model);

  const auto path = temp_path("tiny.cfg");
  spit(path, kTiny);
  CHECK(config_to_json(load_config(path)) == config_to_json(c = tiny()));
}

TEST_CASE("synthetic dataset") {
  const auto data = load_dataset(tiny());
  REQUIRE(data.size() == 3);
  for (const auto& ex : data.examples) {
    CHECK(ex.sequence.frames() == 8);
    CHECK(ex.sequence.joints() == 6);
    CHECK(ex.condition.has_value());
    CHECK(ex.scale > 0.0);
  }
  TrainConfig c = tiny();
  c.data_dir = temp_path("missing_dir");
  CHECK(kind_of([&] { load_dataset(c); }) == ErrorKind::kIo);
}

TEST_CASE("vae training is deterministic and resumes bit for bit") {
  const TrainConfig c = tiny();
  const auto data = load_dataset(c);
  const auto a = train_vae(c, data);
  const auto b = train_vae(c, data);
  REQUIRE(a.history.size() == 12);
  CHECK(losses(a) == losses(b));
  CHECK(a.vae == b.vae);
  for (double l : losses(a)) CHECK(std::isfinite(l));

  TrainHooks stop;
  stop.stop_after = 5;
  const auto half = train_vae(c, data, stop);
  CHECK(half.step == 5);
  const auto path = temp_path("half.ckpt");
  save_checkpoint(path, half);
  const auto loaded = load_checkpoint(path);
  TrainHooks resume;
  resume.resume = &loaded;
  const auto rest = train_vae(c, data, resume);
  CHECK(losses(rest) == losses(a));
  CHECK(rest.vae == a.vae);
  CHECK(rest.optimizer == a.optimizer);

  TrainConfig other = c;
  other.seed = 1;
  CHECK(losses(train_vae(other, data)) != losses(a));
}

TEST_CASE("checkpoint round trip and integrity") {
  const TrainConfig c = tiny();
  const auto data = load_dataset(c);
  TrainHooks h;
  h.stop_after = 2;
  auto ck = train_vae(c, data, h);
  ck.denoiser = diffusion::Denoiser(c.denoiser(), 3).params();
  const auto path = temp_path("rt.ckpt");
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back.step == ck.step);
  CHECK(back.vae == ck.vae);
  REQUIRE(back.denoiser.has_value());
  CHECK(*back.denoiser == *ck.denoiser);
  CHECK(back.optimizer == ck.optimizer);
  CHECK(back.root == ck.root);
  CHECK(back.scale == ck.scale);
  CHECK(losses(back) == losses(ck));
  CHECK(config_to_json(back.config) == config_to_json(ck.config));

  const std::string bytes = slurp(path);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  spit(path, flipped);
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kIntegrity);

  spit(path, bytes.substr(0, bytes.size() - 9));
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kIntegrity);

  std::string versioned = bytes;
  versioned[8] = 2;
  spit(path, versioned);
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kVersion);

  spit(path, "not a checkpoint at all");
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kIntegrity);
  CHECK(kind_of([&] { load_checkpoint(temp_path("nope.ckpt")); }) == ErrorKind::kIo);
}

TEST_CASE("mismatched model config is refused without a partial load") {
  const TrainConfig c = tiny();
  TrainHooks h;
  h.stop_after = 1;
  const auto ck = train_vae(c, load_dataset(c), h);
  vae::ModelConfig other = c.model;
  other.d_model = 16;
  CHECK(kind_of([&] { restore_vae(ck, &other); }) == ErrorKind::kConfig);

  vae::StVae target(other, 9);
  const auto before = target.params();
  CHECK(kind_of([&] { load_params(target.params(), ck.vae); }) == ErrorKind::kConfig);
  CHECK(target.params() == before);

  TrainConfig resume_cfg = c;
  resume_cfg.model.latent_dim = 5;
  TrainHooks r;
  r.resume = &ck;
  CHECK(kind_of([&] { train_vae(resume_cfg, load_dataset(resume_cfg), r); }) == ErrorKind::kConfig);
}

TEST_CASE("divergence aborts and leaves the last good checkpoint") {
  TrainConfig c = tiny();
  c.lr = 1e6;
  c.warmup_steps = 0;
  c.weight_decay = 0.0;
  c.steps = 40;
  const auto path = temp_path("diverged.ckpt");
  fs::remove(path);
  TrainHooks h;
  h.checkpoint_path = path;
  CHECK(kind_of([&] { train_vae(c, load_dataset(c), h); }) == ErrorKind::kDivergence);
  REQUIRE(fs::exists(path));
  const auto ck = load_checkpoint(path);
  CHECK(ck.vae.all_finite());
  CHECK(ck.step < 40);
}

TEST_CASE("gradient probe passes for masked training") {
  TrainConfig c = tiny();
  c.debug_probe = true;
  c.steps = 4;
  CHECK_NOTHROW(train_vae(c, load_dataset(c)));
}

TEST_CASE("log file and periodic checkpoints") {
  TrainConfig c = tiny();
  c.checkpoint_every = 5;
  TrainHooks h;
  h.log_path = temp_path("log.csv");
  h.checkpoint_path = temp_path("periodic.ckpt");
  int seen = 0;
  h.on_step = [&](const LossRecord&) { ++seen; };
  const auto ck = train_vae(c, load_dataset(c), h);
  CHECK(seen == 12);
  const std::string log = slurp(h.log_path);
  CHECK(log.rfind("step,loss,recon,kl\n0,", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 13);
  CHECK(load_checkpoint(h.checkpoint_path).vae == ck.vae);
}

TEST_CASE("diffusion stage") {
  const TrainConfig c = tiny();
  const auto data = load_dataset(c);
  const auto vae_ck = train_vae(c, data);
  const auto fingerprint = vae_ck.vae.fingerprint();

  TrainConfig d = c;
  d.stage = Stage::kDiffusion;
  d.steps = 10;
  const auto a = train_diffusion(d, data, vae_ck);
  const auto b = train_diffusion(d, data, vae_ck);
  CHECK(losses(a) == losses(b));
  CHECK(a.vae.fingerprint() == fingerprint);
  REQUIRE(a.denoiser.has_value());

  // zero output layer: the loss is the plain increment energy
  const auto vae = restore_vae(vae_ck);
  const diffusion::Denoiser fresh(d.denoiser(), 77);
  const double plug = diffusion_eval_loss(fresh, vae, data, d.schedule(), 5, 4);
  double energy = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto mu = vae.encode(data.examples[i].sequence, data.examples[i].mask).mu;
    for (std::uint64_t k = 0; k < 4; ++k) {
      const auto traj = diffusion::build_trajectory(mu, d.schedule(), derive_seed(5, i * 1000003u + k));
      for (std::size_t t = 0; t < traj.steps(); ++t) energy += (traj.state(t + 1) - traj.state(t)).squaredNorm();
    }
  }
  energy /= static_cast<double>(data.size() * 4);
  CHECK(plug == doctest::Approx(energy).epsilon(1e-12));
  CHECK(diffusion_eval_loss(restore_denoiser(a), vae, data, d.schedule(), 5, 4) < plug);

  TrainHooks stop;
  stop.stop_after = 4;
  const auto part = train_diffusion(d, data, vae_ck, stop);
  const auto path = temp_path("diff_half.ckpt");
  save_checkpoint(path, part);
  const auto loaded = load_checkpoint(path);
  TrainHooks resume;
  resume.resume = &loaded;
  const auto rest = train_diffusion(d, data, vae_ck, resume);
  CHECK(losses(rest) == losses(a));
  CHECK(*rest.denoiser == *a.denoiser);
}

TEST_CASE("pipeline reconstruct and generate") {
  const TrainConfig c = tiny();
  const auto data = load_dataset(c);
  const auto vae_ck = train_vae(c, data);
  TrainConfig d = c;
  d.steps = 6;
  const auto full = train_diffusion(d, data, vae_ck);

  const Pipeline vae_only(vae_ck);
  CHECK_FALSE(vae_only.has_denoiser());
  CHECK(kind_of([&] { vae_only.generate_unconditional(1, 8); }) == ErrorKind::kConfig);

  const auto dance = data::synth_dance(8, 6, 120.0, 55);
  const auto corrupted = data::inject_occlusions(dance.sequence, {0.2, data::OcclusionPattern::kRandomJoint, 3});
  const auto recon = vae_only.reconstruct(corrupted.sequence, corrupted.mask);
  CHECK(recon.frames() == 8);
  CHECK(recon.joints() == 6);
  CHECK(recon == vae_only.reconstruct(corrupted.sequence, corrupted.mask));
  // lands in the same region as the input
  double cx = 0.0, rx = 0.0;
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t j = 0; j < 6; ++j) {
      cx += dance.sequence.at(t, j, 0);
      rx += recon.at(t, j, 0);
    }
  }
  CHECK(std::abs(cx - rx) / 48.0 < 0.5);

  const Pipeline gen(full);
  REQUIRE(gen.has_denoiser());
  const auto g1 = gen.generate(dance.audio, dance.sample_rate, 4, 8);
  const auto g2 = gen.generate(dance.audio, dance.sample_rate, 4, 8);
  const auto g3 = gen.generate(dance.audio, dance.sample_rate, 5, 8);
  CHECK(g1 == g2);
  CHECK(g1 != g3);
  CHECK(gen.generate_unconditional(4, 8) == gen.generate_unconditional(4, 8));
  CHECK(kind_of([&] { gen.generate(dance.audio, dance.sample_rate, 4, 9); }) == ErrorKind::kConfig);
}
