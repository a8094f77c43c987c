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

// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "skelefusion/skelefusion.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitData = 4;

int exit_code(skf_status s) {
  switch (s) {
    case SKF_OK:
      return kExitOk;
    case SKF_ERR_INVALID_ARGUMENT:
    case SKF_ERR_CONFIG:
      return kExitUsage;
    case SKF_ERR_PARSE:
    case SKF_ERR_VERSION:
    case SKF_ERR_SHAPE:
    case SKF_ERR_INTEGRITY:
      return kExitData;
    default:
      return kExitRuntime;
  }
}

struct Failure {
  int code;
  std::string message;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void check(skf_status s) {
  if (s != SKF_OK) throw Failure{exit_code(s), one_line(skf_last_error())};
}

[[noreturn]] void usage(const std::string& msg) { throw Failure{kExitUsage, "usage: " + msg}; }

struct SeqDeleter {
  void operator()(skf_sequence* s) const { skf_sequence_free(s); }
};
struct AudioDeleter {
  void operator()(skf_audio* a) const { skf_audio_free(a); }
};
struct ModelDeleter {
  void operator()(skf_model* m) const { skf_model_free(m); }
};
struct ConfigDeleter {
  void operator()(skf_config* c) const { skf_config_free(c); }
};
using SeqPtr = std::unique_ptr<skf_sequence, SeqDeleter>;
using AudioPtr = std::unique_ptr<skf_audio, AudioDeleter>;
using ModelPtr = std::unique_ptr<skf_model, ModelDeleter>;
using ConfigPtr = std::unique_ptr<skf_config, ConfigDeleter>;

SeqPtr load_seq(const std::string& path) {
  skf_sequence* s = nullptr;
  check(skf_sequence_load(path.c_str(), &s));
  return SeqPtr(s);
}

ModelPtr load_model(const std::string& path) {
  skf_model* m = nullptr;
  check(skf_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Failure{kExitRuntime, "io: cannot create '" + parent.string() + "': " + ec.message()};
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kExitRuntime, "io: cannot write '" + path + "'"};
  out << text;
}

std::vector<SeqPtr> load_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) usage("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) usage("no .json sequences in '" + dir + "'");
  std::vector<SeqPtr> out;
  for (const auto& f : files) out.push_back(load_seq(f.string()));
  return out;
}

std::vector<const skf_sequence*> raw(const std::vector<SeqPtr>& v) {
  std::vector<const skf_sequence*> out;
  for (const auto& p : v) out.push_back(p.get());
  return out;
}

std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SkeleFusion: masked skeleton VAE and audio-conditioned latent diffusion"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(skf_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "Synthetic stick-figure dance plus its click track");
  std::size_t s_frames = 30, s_joints = 12;
  double s_bpm = 120.0;
  std::uint64_t s_seed = 0;
  std::string s_out, s_name = "dance";
  synth->add_option("--frames", s_frames, "Frame count")->check(CLI::PositiveNumber);
  synth->add_option("--joints", s_joints, "Joint count")->check(CLI::PositiveNumber);
  synth->add_option("--bpm", s_bpm, "Tempo")->check(CLI::PositiveNumber);
  synth->add_option("--seed", s_seed, "Random seed");
  synth->add_option("--name", s_name, "File stem inside --out");
  synth->add_option("--out", s_out, "Output directory")->required();

  // corrupt
  auto* corrupt = app.add_subcommand("corrupt", "Remove joints to simulate occlusion");
  std::string c_in, c_out, c_pattern = "random-joint";
  double c_rate = 0.1;
  std::uint64_t c_seed = 0;
  corrupt->add_option("--in", c_in, "Input sequence")->required()->check(CLI::ExistingFile);
  corrupt->add_option("--rate", c_rate, "Fraction of joint-frames to remove")->check(CLI::Range(0.0, 1.0));
  corrupt->add_option("--pattern", c_pattern, "random-joint | limb-coherent | temporal-burst")
      ->check(CLI::IsMember({"random-joint", "limb-coherent", "temporal-burst"}));
  corrupt->add_option("--seed", c_seed, "Random seed");
  corrupt->add_option("--out", c_out, "Output sequence")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the VAE or the diffusion stage");
  std::string t_config, t_stage, t_out, t_log, t_resume, t_data, t_vae;
  std::vector<std::string> t_set;
  std::uint64_t t_seed = 0;
  int t_steps = 0;
  double t_lr = 0.0;
  train->add_option("--config", t_config, "key=value or JSON config file")->check(CLI::ExistingFile);
  train->add_option("--stage", t_stage, "vae | diffusion")->check(CLI::IsMember({"vae", "diffusion"}));
  train->add_option("--out", t_out, "Checkpoint path")->required();
  train->add_option("--log", t_log, "CSV loss log (step,loss,recon,kl)");
  train->add_option("--resume", t_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--data", t_data, "Directory of sequences (default: synthetic)")->check(CLI::ExistingDirectory);
  train->add_option("--vae-ckpt", t_vae, "Stage-1 checkpoint for --stage diffusion")->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", t_seed, "Random seed");
  auto* steps_opt = train->add_option("--steps", t_steps, "Step budget")->check(CLI::PositiveNumber);
  auto* lr_opt = train->add_option("--lr", t_lr, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--set", t_set, "Extra key=value overrides (repeatable)");

  // reconstruct
  auto* recon = app.add_subcommand("reconstruct", "Fill in missing joints with a trained VAE");
  std::string r_ckpt, r_in, r_out;
  recon->add_option("--ckpt", r_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  recon->add_option("--in", r_in, "Input sequence (mask honoured)")->required()->check(CLI::ExistingFile);
  recon->add_option("--out", r_out, "Output sequence")->required();

  // generate
  auto* gen = app.add_subcommand("generate", "Sample motion for an audio track");
  std::string g_ckpt, g_audio, g_out;
  std::uint64_t g_seed = 0;
  std::size_t g_frames = 30;
  double g_fps = 30.0;
  gen->add_option("--ckpt", g_ckpt, "Checkpoint with a diffusion model")->required()->check(CLI::ExistingFile);
  gen->add_option("--audio", g_audio, "WAV track (omit for unconditional)")->check(CLI::ExistingFile);
  gen->add_option("--seed", g_seed, "Random seed");
  gen->add_option("--frames", g_frames, "Frame count")->check(CLI::PositiveNumber);
  gen->add_option("--fps", g_fps, "Frames per second")->check(CLI::PositiveNumber);
  gen->add_option("--out", g_out, "Output sequence")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "FID, Diversity or the missing-data sweep");
  std::string e_metric, e_real, e_gen, e_out, e_json, e_pattern = "random-joint";
  std::vector<std::string> e_ckpts;
  std::vector<double> e_rates{0.05, 0.10, 0.15, 0.20};
  std::vector<std::uint64_t> e_seeds{0};
  eval->add_option("--metric", e_metric, "fid | diversity | sweep")
      ->required()
      ->check(CLI::IsMember({"fid", "diversity", "sweep"}));
  eval->add_option("--real", e_real, "Directory of reference sequences");
  eval->add_option("--gen", e_gen, "Directory of generated sequences");
  eval->add_option("--ckpt", e_ckpts, "Models for the sweep (repeatable)")->check(CLI::ExistingFile);
  eval->add_option("--rates", e_rates, "Missing rates for the sweep")->delimiter(',');
  eval->add_option("--seeds", e_seeds, "Corruption seeds for the sweep")->delimiter(',');
  eval->add_option("--pattern", e_pattern, "Occlusion pattern for the sweep")
      ->check(CLI::IsMember({"random-joint", "limb-coherent", "temporal-burst"}));
  eval->add_option("--out", e_out, "CSV report")->required();
  eval->add_option("--json", e_json, "Sweep summary as JSON");

  // render
  auto* render = app.add_subcommand("render", "Stick-figure SVG frames or a CSV dump");
  std::string v_in, v_out, v_format = "svg";
  render->add_option("--in", v_in, "Input sequence")->required()->check(CLI::ExistingFile);
  render->add_option("--out", v_out, "Output directory")->required();
  render->add_option("--format", v_format, "svg | csv")->check(CLI::IsMember({"svg", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.what()).c_str());
    return kExitUsage;
  }

  try {
    if (*synth) {
      skf_sequence* seq = nullptr;
      skf_audio* audio = nullptr;
      check(skf_synth(s_frames, s_joints, s_bpm, s_seed, &seq, &audio));
      SeqPtr seq_ptr(seq);
      AudioPtr audio_ptr(audio);
      std::error_code ec;
      fs::create_directories(s_out, ec);
      if (ec) throw Failure{kExitRuntime, "io: cannot create '" + s_out + "': " + ec.message()};
      check(skf_sequence_save(seq, (fs::path(s_out) / (s_name + ".json")).string().c_str()));
      check(skf_audio_save(audio, (fs::path(s_out) / (s_name + ".wav")).string().c_str()));
    } else if (*corrupt) {
      auto in = load_seq(c_in);
      skf_sequence* out = nullptr;
      check(skf_sequence_corrupt(in.get(), c_rate, c_pattern.c_str(), c_seed, &out));
      SeqPtr out_ptr(out);
      ensure_parent(c_out);
      check(skf_sequence_save(out, c_out.c_str()));
    } else if (*train) {
      skf_config* cfg = nullptr;
      check(skf_config_create(&cfg));
      ConfigPtr cfg_ptr(cfg);
      if (!t_config.empty()) check(skf_config_load_file(cfg, t_config.c_str()));
      if (!t_stage.empty()) check(skf_config_set(cfg, "stage", t_stage.c_str()));
      if (!t_data.empty()) check(skf_config_set(cfg, "data_dir", t_data.c_str()));
      if (!t_vae.empty()) check(skf_config_set(cfg, "vae_checkpoint", t_vae.c_str()));
      if (*seed_opt) check(skf_config_set(cfg, "seed", std::to_string(t_seed).c_str()));
      if (*steps_opt) check(skf_config_set(cfg, "steps", std::to_string(t_steps).c_str()));
      if (*lr_opt) check(skf_config_set(cfg, "lr", fmt(t_lr).c_str()));
      for (const auto& kv : t_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) usage("--set expects key=value, got '" + kv + "'");
        check(skf_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
      }
      ensure_parent(t_out);
      if (!t_log.empty()) ensure_parent(t_log);
      check(skf_train(cfg, t_out.c_str(), t_log.empty() ? nullptr : t_log.c_str(),
                      t_resume.empty() ? nullptr : t_resume.c_str()));
    } else if (*recon) {
      auto model = load_model(r_ckpt);
      auto in = load_seq(r_in);
      skf_sequence* out = nullptr;
      check(skf_model_reconstruct(model.get(), in.get(), &out));
      SeqPtr out_ptr(out);
      ensure_parent(r_out);
      check(skf_sequence_save(out, r_out.c_str()));
    } else if (*gen) {
      auto model = load_model(g_ckpt);
      AudioPtr audio;
      if (!g_audio.empty()) {
        skf_audio* a = nullptr;
        check(skf_audio_load(g_audio.c_str(), &a));
        audio.reset(a);
      }
      skf_sequence* out = nullptr;
      check(skf_model_generate(model.get(), audio.get(), g_seed, g_frames, g_fps, &out));
      SeqPtr out_ptr(out);
      ensure_parent(g_out);
      check(skf_sequence_save(out, g_out.c_str()));
    } else if (*eval) {
      std::string csv;
      if (e_metric == "fid") {
        if (e_real.empty() || e_gen.empty()) usage("--metric fid needs --real and --gen");
        const auto real = load_dir(e_real);
        const auto gen_set = load_dir(e_gen);
        const auto r = raw(real), g = raw(gen_set);
        double v = 0.0;
        check(skf_fid_sequences(r.data(), r.size(), g.data(), g.size(), &v));
        csv = "metric,feature_space,value\nfid,descriptor," + fmt(v) + "\n";
      } else if (e_metric == "diversity") {
        const std::string dir = e_gen.empty() ? e_real : e_gen;
        if (dir.empty()) usage("--metric diversity needs --gen or --real");
        const auto set = load_dir(dir);
        const auto s = raw(set);
        double v = 0.0;
        check(skf_diversity(s.data(), s.size(), &v));
        csv = "metric,feature_space,value\ndiversity,coordinates," + fmt(v) + "\n";
      } else {
        if (e_real.empty()) usage("--metric sweep needs --real");
        if (e_ckpts.empty()) usage("--metric sweep needs at least one --ckpt");
        const auto clean = load_dir(e_real);
        std::vector<ModelPtr> models;
        std::vector<std::string> names;
        for (const auto& p : e_ckpts) {
          models.push_back(load_model(p));
          names.push_back(fs::path(p).stem().string());
        }
        std::vector<const skf_model*> m;
        std::vector<const char*> n;
        for (std::size_t i = 0; i < models.size(); ++i) {
          m.push_back(models[i].get());
          n.push_back(names[i].c_str());
        }
        const auto c = raw(clean);
        char* csv_out = nullptr;
        char* json_out = nullptr;
        check(skf_sweep(c.data(), c.size(), m.data(), n.data(), m.size(), e_rates.data(), e_rates.size(),
                        e_seeds.data(), e_seeds.size(), e_pattern.c_str(), &csv_out, &json_out));
        csv = csv_out;
        const std::string json = json_out;
        skf_string_free(csv_out);
        skf_string_free(json_out);
        if (!e_json.empty()) write_text(e_json, json);
      }
      write_text(e_out, csv);
    } else if (*render) {
      auto in = load_seq(v_in);
      std::size_t n = 0;
      check(skf_render(in.get(), v_out.c_str(), v_format.c_str(), &n));
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  }
  return kExitOk;
}
