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

#include "trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "audio_features.hpp"
#include "common.hpp"

namespace skf::train {

using data::ConfidenceMask;
using data::SkeletonSequence;
using nlohmann::ordered_json;

namespace {

// Seed streams.
constexpr std::uint64_t kStreamVaeInit = 1;
constexpr std::uint64_t kStreamDenoiserInit = 2;
constexpr std::uint64_t kStreamOrder = 3;
constexpr std::uint64_t kStreamCorrupt = 4;
constexpr std::uint64_t kStreamNoise = 5;
constexpr std::uint64_t kStreamTrajectory = 6;
constexpr std::uint64_t kStreamAudioDrop = 7;

constexpr double kDivergenceLimit = 1e6;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kConfig, "config key '" + key + "': expected an integer, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kConfig, "config key '" + key + "': expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorKind::kConfig, "config key '" + key + "': expected true/false, got '" + v + "'");
}

int parse_count(const std::string& key, const std::string& v) {
  const long long n = parse_int(key, v);
  if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
    fail(ErrorKind::kConfig, "config key '" + key + "' out of range");
  }
  return static_cast<int>(n);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used == v.size() && v[0] != '-') return out;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kConfig, "config key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

std::string stage_name(Stage s) { return s == Stage::kVae ? "vae" : "diffusion"; }
std::string loss_name(vae::ReconKind k) { return k == vae::ReconKind::kMse ? "mse" : "l1"; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorKind::kConfig, "lr must be > 0");
  if (epochs < 1) fail(ErrorKind::kConfig, "epochs must be >= 1");
  if (steps < 0) fail(ErrorKind::kConfig, "steps must be >= 0");
  if (seq_len < 2) fail(ErrorKind::kConfig, "seq_len must be >= 2");
  if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be >= 1");
  if (!(beta >= 0.0)) fail(ErrorKind::kConfig, "beta must be >= 0");
  if (!(beta_warmup >= 0.0 && beta_warmup <= 1.0)) fail(ErrorKind::kConfig, "beta_warmup must be in [0, 1]");
  if (warmup_steps < 0) fail(ErrorKind::kConfig, "warmup_steps must be >= 0");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::kConfig, "weight_decay must be >= 0");
  if (checkpoint_every < 0) fail(ErrorKind::kConfig, "checkpoint_every must be >= 0");
  if (!(corrupt_min >= 0.0 && corrupt_min <= corrupt_max && corrupt_max <= 1.0)) {
    fail(ErrorKind::kConfig, "corruption range must satisfy 0 <= corrupt_min <= corrupt_max <= 1");
  }
  if (!(audio_drop >= 0.0 && audio_drop <= 1.0)) fail(ErrorKind::kConfig, "audio_drop must be in [0, 1]");
  if (model.max_frames < seq_len) fail(ErrorKind::kConfig, "model max_frames is smaller than seq_len");
  if (synth_count < 1) fail(ErrorKind::kConfig, "synth_count must be >= 1");
  model.validate();
  denoiser().validate();
  schedule().validate();
}

std::int64_t TrainConfig::total_steps(std::size_t dataset_size) const {
  if (steps > 0) return steps;
  const auto n = static_cast<std::int64_t>(dataset_size);
  const std::int64_t per_epoch = (n + batch_size - 1) / batch_size;
  return static_cast<std::int64_t>(epochs) * std::max<std::int64_t>(per_epoch, 1);
}

diffusion::NoiseSchedule TrainConfig::schedule() const {
  return diffusion::NoiseSchedule::geometric(static_cast<std::size_t>(std::max(diffusion_steps, 1)), sigma_max,
                                             sigma_min);
}

diffusion::DenoiserConfig TrainConfig::denoiser() const {
  diffusion::DenoiserConfig d;
  d.latent_dim = model.latent_dim;
  d.hidden = denoiser_hidden;
  d.steps = diffusion_steps;
  return d;
}

void apply_config_value(TrainConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "stage") {
    if (v == "vae") c.stage = Stage::kVae;
    else if (v == "diffusion") c.stage = Stage::kDiffusion;
    else fail(ErrorKind::kConfig, "stage must be vae or diffusion, got '" + v + "'");
  } else if (key == "loss_kind") {
    if (v == "mse") c.loss_kind = vae::ReconKind::kMse;
    else if (v == "l1") c.loss_kind = vae::ReconKind::kL1;
    else fail(ErrorKind::kConfig, "loss_kind must be mse or l1, got '" + v + "'");
  } else if (key == "use_mask") {
    c.use_mask = parse_bool(key, v);
  } else if (key == "beta") {
    c.beta = parse_real(key, v);
  } else if (key == "beta_warmup") {
    c.beta_warmup = parse_real(key, v);
  } else if (key == "lr") {
    c.lr = parse_real(key, v);
  } else if (key == "warmup_steps") {
    c.warmup_steps = parse_count(key, v);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_real(key, v);
  } else if (key == "batch_size") {
    c.batch_size = parse_count(key, v);
  } else if (key == "epochs") {
    c.epochs = parse_count(key, v);
  } else if (key == "steps") {
    c.steps = parse_count(key, v);
  } else if (key == "seq_len") {
    c.seq_len = parse_count(key, v);
    c.model.max_frames = c.seq_len;
  } else if (key == "seed") {
    c.seed = parse_seed(key, v);
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = parse_count(key, v);
  } else if (key == "corrupt_min") {
    c.corrupt_min = parse_real(key, v);
  } else if (key == "corrupt_max") {
    c.corrupt_max = parse_real(key, v);
  } else if (key == "corrupt_pattern") {
    try {
      c.corrupt_pattern = data::parse_pattern(v);
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, e.what());
    }
  } else if (key == "audio_drop") {
    c.audio_drop = parse_real(key, v);
  } else if (key == "debug_probe") {
    c.debug_probe = parse_bool(key, v);
  } else if (key == "d_model") {
    c.model.d_model = parse_count(key, v);
  } else if (key == "n_spatial_layers") {
    c.model.n_spatial_layers = parse_count(key, v);
  } else if (key == "n_temporal_layers") {
    c.model.n_temporal_layers = parse_count(key, v);
  } else if (key == "n_heads") {
    c.model.n_heads = parse_count(key, v);
  } else if (key == "latent_dim") {
    c.model.latent_dim = parse_count(key, v);
  } else if (key == "joints") {
    c.model.joints = parse_count(key, v);
  } else if (key == "dims") {
    c.model.dims = parse_count(key, v);
  } else if (key == "max_frames") {
    c.model.max_frames = parse_count(key, v);
  } else if (key == "ff_mult") {
    c.model.ff_mult = parse_count(key, v);
  } else if (key == "denoiser_hidden") {
    c.denoiser_hidden = parse_count(key, v);
  } else if (key == "diffusion_steps") {
    c.diffusion_steps = parse_count(key, v);
  } else if (key == "sigma_max") {
    c.sigma_max = parse_real(key, v);
  } else if (key == "sigma_min") {
    c.sigma_min = parse_real(key, v);
  } else if (key == "data_dir") {
    c.data_dir = v;
  } else if (key == "vae_checkpoint") {
    c.vae_checkpoint = v;
  } else if (key == "synth_count") {
    c.synth_count = parse_count(key, v);
  } else if (key == "synth_bpm_min") {
    c.synth_bpm_min = parse_real(key, v);
  } else if (key == "synth_bpm_max") {
    c.synth_bpm_max = parse_real(key, v);
  } else if (key == "synth_seed") {
    c.synth_seed = parse_seed(key, v);
  } else {
    fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  }
}

void apply_config_text(TrainConfig& config, const std::string& text) {
  const std::string body = trim(text);
  if (!body.empty() && body[0] == '{') {
    ordered_json doc;
    try {
      doc = ordered_json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::kParse, std::string("config JSON: ") + e.what());
    }
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const auto& v = it.value();
      std::string s;
      if (v.is_string()) s = v.get<std::string>();
      else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
      else if (v.is_number()) s = v.dump();
      else fail(ErrorKind::kConfig, "config key '" + it.key() + "' must be a scalar");
      apply_config_value(config, it.key(), s);
    }
    return;
  }
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfig, "config line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_config_value(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  TrainConfig c;
  apply_config_text(c, buf.str());
  return c;
}

std::string config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["stage"] = stage_name(c.stage);
  j["loss_kind"] = loss_name(c.loss_kind);
  j["use_mask"] = c.use_mask;
  j["beta"] = c.beta;
  j["beta_warmup"] = c.beta_warmup;
  j["lr"] = c.lr;
  j["warmup_steps"] = c.warmup_steps;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["steps"] = c.steps;
  j["seq_len"] = c.seq_len;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["corrupt_min"] = c.corrupt_min;
  j["corrupt_max"] = c.corrupt_max;
  j["corrupt_pattern"] = data::pattern_name(c.corrupt_pattern);
  j["audio_drop"] = c.audio_drop;
  j["debug_probe"] = c.debug_probe;
  j["d_model"] = c.model.d_model;
  j["n_spatial_layers"] = c.model.n_spatial_layers;
  j["n_temporal_layers"] = c.model.n_temporal_layers;
  j["n_heads"] = c.model.n_heads;
  j["latent_dim"] = c.model.latent_dim;
  j["joints"] = c.model.joints;
  j["dims"] = c.model.dims;
  j["max_frames"] = c.model.max_frames;
  j["ff_mult"] = c.model.ff_mult;
  j["denoiser_hidden"] = c.denoiser_hidden;
  j["diffusion_steps"] = c.diffusion_steps;
  j["sigma_max"] = c.sigma_max;
  j["sigma_min"] = c.sigma_min;
  j["data_dir"] = c.data_dir;
  j["vae_checkpoint"] = c.vae_checkpoint;
  j["synth_count"] = c.synth_count;
  j["synth_bpm_min"] = c.synth_bpm_min;
  j["synth_bpm_max"] = c.synth_bpm_max;
  j["synth_seed"] = c.synth_seed;
  return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
  TrainConfig c;
  apply_config_text(c, text);
  return c;
}

// ---------------------------------------------------------------------------
// Data

namespace {

data::Normalized normalize_visible(const SkeletonSequence& x, const ConfidenceMask& mask) {
  std::size_t first = 0;
  auto empty = [&](std::size_t t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      if (mask.present(t, j)) return false;
    }
    return true;
  };
  while (first < x.frames() && empty(first)) ++first;
  if (first == x.frames()) fail(ErrorKind::kDegenerate, "sequence has no visible joints");
  if (first == 0) return data::normalize(x, mask);
  // Frames before `first` have nothing visible, so the window has the same
  // extent; only the root moves to the first populated frame.
  auto ref = data::normalize(x.window(first, x.frames() - first), mask.window(first, x.frames() - first));
  std::vector<double> out(x.data().size(), 0.0);
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      if (!mask.present(t, j)) continue;
      for (std::size_t d = 0; d < x.dims(); ++d) {
        out[(t * x.joints() + j) * x.dims() + d] = (x.at(t, j, d) - ref.root[d]) / ref.scale;
      }
    }
  }
  return {x.with_data(std::move(out)), ref.root, ref.scale};
}

Vector window_condition(const Matrix& features, std::size_t start, std::size_t count) {
  const Matrix rows = features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return diffusion::condition_vector(rows.colwise().mean().transpose());
}

void check_example_shape(const TrainConfig& c, const SkeletonSequence& x, const std::string& where) {
  if (static_cast<int>(x.joints()) != c.model.joints || static_cast<int>(x.dims()) != c.model.dims) {
    fail(ErrorKind::kConfig, where + ": J=" + std::to_string(x.joints()) + ", D=" + std::to_string(x.dims()) +
                                 " but the config expects J=" + std::to_string(c.model.joints) +
                                 ", D=" + std::to_string(c.model.dims));
  }
}

}  // namespace

Example make_example(const SkeletonSequence& x, const std::optional<ConfidenceMask>& mask,
                     const std::optional<Vector>& condition) {
  const ConfidenceMask m = mask ? *mask : ConfidenceMask::ones(x.frames(), x.joints());
  auto norm = normalize_visible(x, m);
  return {std::move(norm.sequence), m, condition, std::move(norm.root), norm.scale};
}

Dataset load_dataset(const TrainConfig& c) {
  c.validate();
  Dataset out;
  const auto len = static_cast<std::size_t>(c.seq_len);
  if (c.data_dir.empty()) {
    for (int i = 0; i < c.synth_count; ++i) {
      const double bpm = c.synth_count == 1 ? c.synth_bpm_min
                                            : c.synth_bpm_min + (c.synth_bpm_max - c.synth_bpm_min) * i /
                                                                    static_cast<double>(c.synth_count - 1);
      auto dance = data::synth_dance(len, static_cast<std::size_t>(c.model.joints), bpm,
                                     c.synth_seed + static_cast<std::uint64_t>(i));
      if (c.model.dims != 2) fail(ErrorKind::kConfig, "synthetic data is 2-D");
      const auto track = audio::extract_features(dance.audio, dance.sample_rate, dance.sequence.fps());
      const Matrix feats = audio::align_to_motion(track, len).temporal;
      out.examples.push_back(make_example(dance.sequence, std::nullopt, window_condition(feats, 0, len)));
    }
    return out;
  }

  namespace fs = std::filesystem;
  if (!fs::is_directory(c.data_dir)) fail(ErrorKind::kIo, "data_dir '" + c.data_dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(c.data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const auto file = data::load_sequence(path.string());
    const SkeletonSequence& x = file.sequence;
    check_example_shape(c, x, path.string());
    std::optional<Matrix> feats;
    fs::path wav = path;
    wav.replace_extension(".wav");
    if (fs::exists(wav)) {
      const auto pcm = data::load_wav(wav.string());
      auto track = audio::extract_features(pcm.samples, pcm.sample_rate, x.fps());
      if (track.frames() != x.frames()) track = audio::align_to_motion(track, x.frames());
      feats = track.temporal;
    }
    const std::size_t count = x.frames() < len ? x.frames() : len;
    for (std::size_t start = 0; start + count <= x.frames(); start += count) {
      std::optional<ConfidenceMask> m;
      if (file.mask) m = file.mask->window(start, count);
      std::optional<Vector> cond;
      if (feats) cond = window_condition(*feats, start, count);
      out.examples.push_back(make_example(x.window(start, count), m, cond));
    }
  }
  if (out.examples.empty()) fail(ErrorKind::kConfig, "no sequences found in '" + c.data_dir + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void i64(std::int64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void store(const nn::ParamStore& s) {
    u64(s.size());
    for (const auto& t : s.tensors()) {
      str(t.name);
      matrix(t.value);
    }
  }
  void matrices(const std::vector<Matrix>& ms) {
    u64(ms.size());
    for (const auto& m : ms) matrix(m);
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  void bytes(void* p, std::size_t n) {
    if (n > end_ - pos_) fail(ErrorKind::kIntegrity, "checkpoint truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > end_ - pos_) fail(ErrorKind::kIntegrity, "checkpoint truncated");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const auto r = u64();
    const auto c = u64();
    if (r != 0 && c > (end_ - pos_) / sizeof(double) / r) fail(ErrorKind::kIntegrity, "checkpoint tensor truncated");
    Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    bytes(m.data(), sizeof(double) * r * c);
    return m;
  }
  nn::ParamStore store() {
    nn::ParamStore s;
    const auto n = u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = str();
      s.add(std::move(name), matrix());
    }
    return s;
  }
  std::vector<Matrix> matrices() {
    std::vector<Matrix> out(u64());
    for (auto& m : out) m = matrix();
    return out;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'S', 'K', 'F', 'C', 'K', 'P', 'T', '\0'};

std::uint32_t crc_of(const std::string& buf, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n)));
}

std::string header_json(const Checkpoint& ck) {
  ordered_json j;
  j["config"] = ordered_json::parse(config_to_json(ck.config));
  j["root"] = ck.root;
  j["scale"] = ck.scale;
  return j.dump();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(header_json(ck));
  w.i64(ck.step);
  w.store(ck.vae);
  w.u32(ck.denoiser ? 1 : 0);
  if (ck.denoiser) w.store(*ck.denoiser);
  w.i64(ck.optimizer.step);
  w.matrices(ck.optimizer.first_moment);
  w.matrices(ck.optimizer.second_moment);
  w.u64(ck.history.size());
  for (const auto& r : ck.history) {
    w.i64(r.step);
    w.bytes(&r.loss, sizeof r.loss);
    w.bytes(&r.recon, sizeof r.recon);
    w.bytes(&r.kl, sizeof r.kl);
  }
  w.u32(crc_of(w.buffer(), w.buffer().size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write checkpoint '" + path + "'");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) fail(ErrorKind::kIo, "short write to checkpoint '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move checkpoint into place at '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof kMagic + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::kIntegrity, "'" + path + "' is not a checkpoint");
  }
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, 4);
  Reader r(buf, body);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kVersion, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  if (stored != crc_of(buf, body)) fail(ErrorKind::kIntegrity, "checkpoint '" + path + "' failed its checksum");

  Checkpoint ck;
  const auto header = ordered_json::parse(r.str());
  ck.config = config_from_json(header.at("config").dump());
  ck.root = header.at("root").get<std::vector<double>>();
  ck.scale = header.at("scale").get<double>();
  ck.step = r.i64();
  ck.vae = r.store();
  if (r.u32() != 0) ck.denoiser = r.store();
  ck.optimizer.step = r.i64();
  ck.optimizer.first_moment = r.matrices();
  ck.optimizer.second_moment = r.matrices();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    LossRecord rec;
    rec.step = r.i64();
    r.bytes(&rec.loss, sizeof rec.loss);
    r.bytes(&rec.recon, sizeof rec.recon);
    r.bytes(&rec.kl, sizeof rec.kl);
    ck.history.push_back(rec);
  }
  if (!r.done()) fail(ErrorKind::kIntegrity, "trailing bytes in checkpoint '" + path + "'");
  return ck;
}

void load_params(nn::ParamStore& dst, const nn::ParamStore& src) {
  if (dst.size() != src.size()) {
    fail(ErrorKind::kConfig, "parameter count mismatch: model has " + std::to_string(dst.size()) +
                                 " tensors, checkpoint has " + std::to_string(src.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const auto& a = dst[i];
    const auto& b = src[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) {
      fail(ErrorKind::kConfig, "checkpoint tensor '" + b.name + "' does not match model tensor '" + a.name + "'");
    }
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].value = src[i].value;
}

vae::StVae restore_vae(const Checkpoint& ck, const vae::ModelConfig* expected) {
  if (expected && !(*expected == ck.config.model)) {
    fail(ErrorKind::kConfig, "checkpoint model configuration differs from the requested one");
  }
  vae::StVae model(ck.config.model, derive_seed(ck.config.seed, kStreamVaeInit));
  load_params(model.params(), ck.vae);
  return model;
}

diffusion::Denoiser restore_denoiser(const Checkpoint& ck) {
  if (!ck.denoiser) fail(ErrorKind::kConfig, "checkpoint has no diffusion model");
  diffusion::Denoiser model(ck.config.denoiser(), derive_seed(ck.config.seed, kStreamDenoiserInit));
  load_params(model.params(), *ck.denoiser);
  return model;
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

std::size_t example_index(const TrainConfig& c, std::size_t n, std::int64_t sample) {
  const auto epoch = static_cast<std::uint64_t>(sample) / n;
  const auto pos = static_cast<std::size_t>(static_cast<std::uint64_t>(sample) % n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(c.seed, kStreamOrder), epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order[pos];
}

double lr_at(const TrainConfig& c, std::int64_t step) {
  if (c.warmup_steps <= 0) return c.lr;
  return c.lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps));
}

double beta_at(const TrainConfig& c, std::int64_t step, std::int64_t total) {
  const double ramp = c.beta_warmup * static_cast<double>(total);
  if (ramp <= 0.0) return c.beta;
  return c.beta * std::min(1.0, static_cast<double>(step) / ramp);
}

struct VaeBatchItem {
  SkeletonSequence target;
  ConfidenceMask visible;
};

VaeBatchItem vae_item(const TrainConfig& c, const Example& ex, std::int64_t sample) {
  if (c.corrupt_max <= 0.0) return {ex.sequence, ex.mask};
  Rng rng(derive_seed(derive_seed(c.seed, kStreamCorrupt), static_cast<std::uint64_t>(sample)));
  const double rate = rng.uniform(c.corrupt_min, c.corrupt_max);
  data::CorruptionSpec spec{rate, c.corrupt_pattern, derive_seed(rng.below(~std::uint64_t{0}), sample)};
  auto corrupted = data::inject_occlusions(ex.sequence, spec);
  std::vector<std::uint8_t> both(corrupted.mask.values().begin(), corrupted.mask.values().end());
  for (std::size_t i = 0; i < both.size(); ++i) both[i] = both[i] && ex.mask.values()[i];
  ConfidenceMask visible(ex.mask.frames(), ex.mask.joints(), std::move(both));
  return {data::apply_mask(corrupted.sequence, visible), visible};
}

class LossLog {
 public:
  LossLog(const std::string& path, const std::vector<LossRecord>& earlier) {
    if (path.empty()) return;
    out_.open(path, std::ios::trunc);
    if (!out_) fail(ErrorKind::kIo, "cannot write training log '" + path + "'");
    out_ << "step,loss,recon,kl\n";
    for (const auto& r : earlier) write(r);
  }
  void write(const LossRecord& r) {
    if (!out_.is_open()) return;
    char line[160];
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step), r.loss, r.recon,
                  r.kl);
    out_ << line;
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::vector<double> mean_root(const Dataset& data) {
  std::vector<double> root(data.examples.front().root.size(), 0.0);
  for (const auto& ex : data.examples) {
    for (std::size_t d = 0; d < root.size(); ++d) root[d] += ex.root[d];
  }
  for (auto& r : root) r /= static_cast<double>(data.size());
  return root;
}

double mean_scale(const Dataset& data) {
  double s = 0.0;
  for (const auto& ex : data.examples) s += ex.scale;
  return s / static_cast<double>(data.size());
}

[[noreturn]] void diverged(const Checkpoint& last_good, const std::string& path, const std::string& why) {
  std::string msg = why;
  if (!path.empty()) {
    save_checkpoint(path, last_good);
    msg += "; last good state (step " + std::to_string(last_good.step) + ") saved to '" + path + "'";
  }
  fail(ErrorKind::kDivergence, msg);
}

void probe_masked_gradients(const vae::StVae& model, const TrainConfig& c, const VaeBatchItem& item) {
  if (!c.use_mask || item.visible.count_missing() == 0) return;
  std::vector<double> shifted(item.target.data().begin(), item.target.data().end());
  for (std::size_t t = 0; t < item.target.frames(); ++t) {
    for (std::size_t j = 0; j < item.target.joints(); ++j) {
      if (item.visible.present(t, j)) continue;
      for (std::size_t d = 0; d < item.target.dims(); ++d) {
        shifted[(t * item.target.joints() + j) * item.target.dims() + d] += 1.0 + static_cast<double>(t + j);
      }
    }
  }
  const SkeletonSequence other = item.target.with_data(std::move(shifted));
  auto g1 = model.params().zero_grads();
  auto g2 = model.params().zero_grads();
  vae::vae_objective(model, {&item.target, &item.visible, &item.visible}, c.loss_kind, c.beta, 0, &g1);
  vae::vae_objective(model, {&other, &item.visible, &item.visible}, c.loss_kind, c.beta, 0, &g2);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    if (g1[i] != g2[i]) {
      fail(ErrorKind::kIntegrity, "gradient probe: masked joints changed the gradient of '" +
                                      model.params()[i].name + "'");
    }
  }
}

}  // namespace

Checkpoint train_vae(const TrainConfig& config, const Dataset& data, const TrainHooks& hooks) {
  config.validate();
  if (data.size() == 0) fail(ErrorKind::kConfig, "training set is empty");
  for (const auto& ex : data.examples) check_example_shape(config, ex.sequence, "training example");

  vae::StVae model(config.model, derive_seed(config.seed, kStreamVaeInit));
  Checkpoint ck;
  ck.config = config;
  ck.config.stage = Stage::kVae;
  ck.root = mean_root(data);
  ck.scale = mean_scale(data);
  ck.optimizer = AdamWState::for_params(model.params());
  if (hooks.resume) {
    const Checkpoint& r = *hooks.resume;
    if (!(r.config.model == config.model)) fail(ErrorKind::kConfig, "resume checkpoint has a different model");
    load_params(model.params(), r.vae);
    ck.optimizer = r.optimizer;
    ck.step = r.step;
    ck.history = r.history;
  }
  ck.vae = model.params();

  const std::int64_t total = config.total_steps(data.size());
  const std::int64_t stop = hooks.stop_after > 0 ? std::min(total, hooks.stop_after) : total;
  const auto n = data.size();
  const auto per_epoch = static_cast<std::int64_t>((n + static_cast<std::size_t>(config.batch_size) - 1) /
                                                   static_cast<std::size_t>(config.batch_size));
  LossLog log(hooks.log_path, ck.history);
  const AdamWOptions adam{0.9, 0.999, 1e-8, config.weight_decay};

  for (std::int64_t step = ck.step; step < stop; ++step) {
    const double beta = beta_at(config, step, total);
    auto grads = model.params().zero_grads();
    LossRecord rec;
    rec.step = step;
    for (int b = 0; b < config.batch_size; ++b) {
      const std::int64_t sample = step * config.batch_size + b;
      const Example& ex = data.examples[example_index(config, n, sample)];
      const VaeBatchItem item = vae_item(config, ex, sample);
      if (config.debug_probe && b == 0 && step % per_epoch == 0) probe_masked_gradients(model, config, item);
      const ConfidenceMask all = ConfidenceMask::ones(item.visible.frames(), item.visible.joints());
      const ConfidenceMask& m = config.use_mask ? item.visible : all;
      const auto loss = vae::vae_objective(model, {&item.target, &m, &m}, config.loss_kind, beta,
                                           derive_seed(derive_seed(config.seed, kStreamNoise),
                                                       static_cast<std::uint64_t>(sample)),
                                           &grads);
      rec.loss += loss.total;
      rec.recon += loss.recon;
      rec.kl += loss.kl;
    }
    rec.loss /= config.batch_size;
    rec.recon /= config.batch_size;
    rec.kl /= config.batch_size;
    if (!std::isfinite(rec.loss) || rec.loss > kDivergenceLimit) {
      diverged(ck, hooks.checkpoint_path,
               "training diverged at step " + std::to_string(step) + " (loss " + std::to_string(rec.loss) + ")");
    }
    try {
      optimizer_step(model.params(), grads, ck.optimizer, lr_at(config, step), adam);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDivergence) throw;
      diverged(ck, hooks.checkpoint_path, e.what());
    }
    ck.step = step + 1;
    ck.vae = model.params();
    ck.history.push_back(rec);
    log.write(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (config.checkpoint_every > 0 && ck.step % config.checkpoint_every == 0 && !hooks.checkpoint_path.empty()) {
      save_checkpoint(hooks.checkpoint_path, ck);
    }
  }
  if (!hooks.checkpoint_path.empty()) save_checkpoint(hooks.checkpoint_path, ck);
  return ck;
}

namespace {

std::vector<Vector> latents(const vae::StVae& vae, const TrainConfig& vae_config, const Dataset& data) {
  std::vector<Vector> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) {
    const ConfidenceMask m =
        vae_config.use_mask ? ex.mask : ConfidenceMask::ones(ex.mask.frames(), ex.mask.joints());
    out.push_back(vae.encode(ex.sequence, m).mu);
  }
  return out;
}

}  // namespace

double diffusion_eval_loss(const diffusion::Denoiser& model, const vae::StVae& vae, const Dataset& data,
                           const diffusion::NoiseSchedule& schedule, std::uint64_t seed, int draws_per_example,
                           bool use_mask) {
  if (data.size() == 0) fail(ErrorKind::kConfig, "evaluation set is empty");
  TrainConfig encoding;
  encoding.use_mask = use_mask;
  const auto z0 = latents(vae, encoding, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector* cond = data.examples[i].condition ? &*data.examples[i].condition : nullptr;
    for (int k = 0; k < draws_per_example; ++k) {
      const auto traj = diffusion::build_trajectory(z0[i], schedule, derive_seed(seed, i * 1000003u + k));
      total += diffusion::diffusion_loss(model, traj, cond, nullptr);
    }
  }
  return total / static_cast<double>(data.size() * static_cast<std::size_t>(draws_per_example));
}

Checkpoint train_diffusion(const TrainConfig& config_in, const Dataset& data, const Checkpoint& vae_ckpt,
                           const TrainHooks& hooks) {
  // The latent space is whatever the stage-1 model learned.
  TrainConfig config = config_in;
  config.stage = Stage::kDiffusion;
  config.model = vae_ckpt.config.model;
  config.use_mask = vae_ckpt.config.use_mask;
  config.loss_kind = vae_ckpt.config.loss_kind;
  config.validate();
  if (data.size() == 0) fail(ErrorKind::kConfig, "training set is empty");
  for (const auto& ex : data.examples) check_example_shape(config, ex.sequence, "training example");

  const vae::StVae vae = restore_vae(vae_ckpt);
  const std::uint64_t vae_hash = vae.params().fingerprint();
  const auto z0 = latents(vae, config, data);
  const auto schedule = config.schedule();

  diffusion::Denoiser model(config.denoiser(), derive_seed(config.seed, kStreamDenoiserInit));
  Checkpoint ck;
  ck.config = config;
  ck.vae = vae_ckpt.vae;
  ck.root = vae_ckpt.root;
  ck.scale = vae_ckpt.scale;
  ck.optimizer = AdamWState::for_params(model.params());
  if (hooks.resume) {
    const Checkpoint& r = *hooks.resume;
    if (!r.denoiser) fail(ErrorKind::kConfig, "resume checkpoint has no diffusion model");
    if (!(r.config.denoiser() == config.denoiser())) {
      fail(ErrorKind::kConfig, "resume checkpoint has a different denoiser");
    }
    load_params(model.params(), *r.denoiser);
    ck.optimizer = r.optimizer;
    ck.step = r.step;
    ck.history = r.history;
  }
  ck.denoiser = model.params();

  const std::int64_t total = config.total_steps(data.size());
  const std::int64_t stop = hooks.stop_after > 0 ? std::min(total, hooks.stop_after) : total;
  const auto n = data.size();
  LossLog log(hooks.log_path, ck.history);
  const AdamWOptions adam{0.9, 0.999, 1e-8, config.weight_decay};

  for (std::int64_t step = ck.step; step < stop; ++step) {
    auto grads = model.params().zero_grads();
    LossRecord rec;
    rec.step = step;
    for (int b = 0; b < config.batch_size; ++b) {
      const std::int64_t sample = step * config.batch_size + b;
      const auto s = static_cast<std::uint64_t>(sample);
      const std::size_t idx = example_index(config, n, sample);
      const auto traj =
          diffusion::build_trajectory(z0[idx], schedule, derive_seed(derive_seed(config.seed, kStreamTrajectory), s));
      Rng drop(derive_seed(derive_seed(config.seed, kStreamAudioDrop), s));
      const auto& cond = data.examples[idx].condition;
      const bool use_audio = cond.has_value() && !(drop.uniform() < config.audio_drop);
      rec.loss += diffusion::diffusion_loss(model, traj, use_audio ? &*cond : nullptr, &grads);
    }
    rec.loss /= config.batch_size;
    rec.recon = rec.loss;
    if (!std::isfinite(rec.loss) || rec.loss > kDivergenceLimit) {
      diverged(ck, hooks.checkpoint_path,
               "training diverged at step " + std::to_string(step) + " (loss " + std::to_string(rec.loss) + ")");
    }
    try {
      optimizer_step(model.params(), grads, ck.optimizer, lr_at(config, step), adam);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDivergence) throw;
      diverged(ck, hooks.checkpoint_path, e.what());
    }
    ck.step = step + 1;
    ck.denoiser = model.params();
    ck.history.push_back(rec);
    log.write(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (config.checkpoint_every > 0 && ck.step % config.checkpoint_every == 0 && !hooks.checkpoint_path.empty()) {
      save_checkpoint(hooks.checkpoint_path, ck);
    }
  }
  if (vae.params().fingerprint() != vae_hash) fail(ErrorKind::kIntegrity, "VAE parameters changed during stage 2");
  if (!hooks.checkpoint_path.empty()) save_checkpoint(hooks.checkpoint_path, ck);
  return ck;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(const Checkpoint& ck)
    : config_(ck.config), vae_(restore_vae(ck)), schedule_(ck.config.schedule()), root_(ck.root), scale_(ck.scale) {
  if (ck.denoiser) denoiser_.emplace(restore_denoiser(ck));
  if (root_.size() != static_cast<std::size_t>(config_.model.dims)) root_.assign(config_.model.dims, 0.0);
}

SkeletonSequence Pipeline::reconstruct(const SkeletonSequence& x, const ConfidenceMask& mask) const {
  vae_.check_input(x, mask);
  const auto norm = normalize_visible(x, mask);
  const ConfidenceMask m = config_.use_mask ? mask : ConfidenceMask::ones(mask.frames(), mask.joints());
  const auto recon = vae_.reconstruct(norm.sequence, m);
  return data::denormalize(recon, norm.root, norm.scale);
}

SkeletonSequence Pipeline::place(const SkeletonSequence& normalized) const {
  return data::denormalize(normalized, root_, scale_);
}

SkeletonSequence Pipeline::generate(std::span<const double> audio_samples, int sample_rate, std::uint64_t seed,
                                    std::size_t frames, double fps) const {
  if (!denoiser_) fail(ErrorKind::kConfig, "checkpoint has no diffusion model; train stage diffusion first");
  auto track = audio::extract_features(audio_samples, sample_rate, fps);
  if (track.frames() == 0) fail(ErrorKind::kLength, "audio track is too short");
  track = audio::align_to_motion(track, frames);
  const Vector cond = diffusion::condition_vector(audio::pooled_features(track));
  return place(diffusion::sample(*denoiser_, vae_, schedule_, &cond, seed, frames, fps));
}

SkeletonSequence Pipeline::generate_unconditional(std::uint64_t seed, std::size_t frames, double fps) const {
  if (!denoiser_) fail(ErrorKind::kConfig, "checkpoint has no diffusion model; train stage diffusion first");
  return place(diffusion::sample(*denoiser_, vae_, schedule_, nullptr, seed, frames, fps));
}

}  // namespace skf::train
