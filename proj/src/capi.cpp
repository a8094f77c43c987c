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

#include "skelefusion/skelefusion.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "audio_features.hpp"
#include "common.hpp"
#include "metrics.hpp"
#include "render.hpp"
#include "skeleton_data.hpp"
#include "trainer.hpp"

struct skf_sequence {
  skf::data::SkeletonSequence sequence;
  std::optional<skf::data::ConfidenceMask> mask;
  std::vector<unsigned char> mask_bytes;

  void sync_mask() {
    mask_bytes.clear();
    if (mask) mask_bytes.assign(mask->values().begin(), mask->values().end());
  }
};

struct skf_audio {
  skf::data::PcmAudio pcm;
};

struct skf_config {
  skf::train::TrainConfig config;
};

struct skf_model {
  skf::train::Pipeline pipeline;
};

namespace {

thread_local std::string g_last_error;

skf_status status_of(skf::ErrorKind kind) {
  using skf::ErrorKind;
  switch (kind) {
    case ErrorKind::kShape: return SKF_ERR_SHAPE;
    case ErrorKind::kParse: return SKF_ERR_PARSE;
    case ErrorKind::kVersion: return SKF_ERR_VERSION;
    case ErrorKind::kConfig: return SKF_ERR_CONFIG;
    case ErrorKind::kDegenerate: return SKF_ERR_DEGENERATE;
    case ErrorKind::kLength: return SKF_ERR_LENGTH;
    case ErrorKind::kIntegrity: return SKF_ERR_INTEGRITY;
    case ErrorKind::kSymmetry: return SKF_ERR_SYMMETRY;
    case ErrorKind::kSampleSize: return SKF_ERR_SAMPLE_SIZE;
    case ErrorKind::kDimension: return SKF_ERR_DIMENSION;
    case ErrorKind::kDivergence: return SKF_ERR_DIVERGENCE;
    case ErrorKind::kInvalidArgument: return SKF_ERR_INVALID_ARGUMENT;
    case ErrorKind::kIo: return SKF_ERR_IO;
  }
  return SKF_ERR_INTERNAL;
}

template <typename Fn>
skf_status guarded(Fn&& fn) {
  try {
    fn();
    return SKF_OK;
  } catch (const skf::Error& e) {
    g_last_error = std::string(skf::error_kind_name(e.kind())) + ": " + e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "internal: out of memory";
  } catch (const std::exception& e) {
    g_last_error = std::string("internal: ") + e.what();
  } catch (...) {
    g_last_error = "internal: unknown exception";
  }
  return SKF_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) skf::fail(skf::ErrorKind::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

skf_sequence* wrap(skf::data::SkeletonSequence seq, std::optional<skf::data::ConfidenceMask> mask = std::nullopt) {
  auto* out = new skf_sequence{std::move(seq), std::move(mask), {}};
  out->sync_mask();
  return out;
}

std::vector<skf::data::SkeletonSequence> unwrap(const skf_sequence* const* seqs, size_t n) {
  require(seqs != nullptr || n == 0, "sequence list is NULL");
  std::vector<skf::data::SkeletonSequence> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    require(seqs[i] != nullptr, "sequence list contains NULL");
    out.push_back(seqs[i]->sequence);
  }
  return out;
}

}  // namespace

extern "C" {

const char* skf_version(void) { return "0.1.0"; }

const char* skf_last_error(void) { return g_last_error.c_str(); }

const char* skf_status_name(skf_status status) {
  switch (status) {
    case SKF_OK: return "ok";
    case SKF_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case SKF_ERR_CONFIG: return "config";
    case SKF_ERR_IO: return "io";
    case SKF_ERR_PARSE: return "parse";
    case SKF_ERR_VERSION: return "version";
    case SKF_ERR_SHAPE: return "shape";
    case SKF_ERR_DEGENERATE: return "degenerate-input";
    case SKF_ERR_LENGTH: return "length";
    case SKF_ERR_INTEGRITY: return "integrity";
    case SKF_ERR_SYMMETRY: return "symmetry";
    case SKF_ERR_SAMPLE_SIZE: return "sample-size";
    case SKF_ERR_DIMENSION: return "dimension";
    case SKF_ERR_DIVERGENCE: return "divergence";
    case SKF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void skf_string_free(char* s) { std::free(s); }

skf_status skf_sequence_create(size_t frames, size_t joints, size_t dims, double fps, const double* data,
                               skf_sequence** out) {
  return guarded([&] {
    require(out != nullptr && data != nullptr, "NULL argument");
    *out = nullptr;
    std::vector<double> values(data, data + frames * joints * dims);
    *out = wrap(skf::data::SkeletonSequence(frames, joints, dims, fps, std::move(values)));
  });
}

skf_status skf_sequence_load(const char* path, skf_sequence** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    auto file = skf::data::load_sequence(path);
    *out = wrap(std::move(file.sequence), std::move(file.mask));
  });
}

skf_status skf_sequence_save(const skf_sequence* seq, const char* path) {
  return guarded([&] {
    require(seq != nullptr && path != nullptr, "NULL argument");
    skf::data::save_sequence(path, seq->sequence, seq->mask);
  });
}

void skf_sequence_free(skf_sequence* seq) { delete seq; }

size_t skf_sequence_frames(const skf_sequence* seq) { return seq ? seq->sequence.frames() : 0; }
size_t skf_sequence_joints(const skf_sequence* seq) { return seq ? seq->sequence.joints() : 0; }
size_t skf_sequence_dims(const skf_sequence* seq) { return seq ? seq->sequence.dims() : 0; }
double skf_sequence_fps(const skf_sequence* seq) { return seq ? seq->sequence.fps() : 0.0; }
const double* skf_sequence_data(const skf_sequence* seq) { return seq ? seq->sequence.data().data() : nullptr; }

const unsigned char* skf_sequence_mask(const skf_sequence* seq) {
  return seq && seq->mask ? seq->mask_bytes.data() : nullptr;
}

skf_status skf_sequence_set_mask(skf_sequence* seq, const unsigned char* mask) {
  return guarded([&] {
    require(seq != nullptr, "NULL sequence");
    if (mask == nullptr) {
      seq->mask.reset();
    } else {
      const size_t n = seq->sequence.frames() * seq->sequence.joints();
      seq->mask = skf::data::ConfidenceMask(seq->sequence.frames(), seq->sequence.joints(),
                                            std::vector<std::uint8_t>(mask, mask + n));
    }
    seq->sync_mask();
  });
}

skf_status skf_sequence_corrupt(const skf_sequence* in, double rate, const char* pattern, uint64_t seed,
                                skf_sequence** out) {
  return guarded([&] {
    require(in != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    skf::data::CorruptionSpec spec;
    spec.missing_rate = rate;
    spec.pattern = skf::data::parse_pattern(pattern ? pattern : "random-joint");
    spec.seed = seed;
    auto corrupted = skf::data::inject_occlusions(in->sequence, spec);
    skf::data::ConfidenceMask mask = corrupted.mask;
    if (in->mask) {
      std::vector<std::uint8_t> both(mask.values().begin(), mask.values().end());
      for (size_t i = 0; i < both.size(); ++i) both[i] = both[i] && in->mask->values()[i];
      mask = skf::data::ConfidenceMask(mask.frames(), mask.joints(), std::move(both));
    }
    *out = wrap(skf::data::apply_mask(corrupted.sequence, mask), mask);
  });
}

skf_status skf_synth(size_t frames, size_t joints, double bpm, uint64_t seed, skf_sequence** seq_out,
                     skf_audio** audio_out) {
  return guarded([&] {
    if (seq_out) *seq_out = nullptr;
    if (audio_out) *audio_out = nullptr;
    auto dance = skf::data::synth_dance(frames, joints, bpm, seed);
    if (seq_out) *seq_out = wrap(std::move(dance.sequence));
    if (audio_out) *audio_out = new skf_audio{{std::move(dance.audio), dance.sample_rate}};
  });
}

skf_status skf_audio_load(const char* path, skf_audio** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    *out = new skf_audio{skf::data::load_wav(path)};
  });
}

skf_status skf_audio_save(const skf_audio* audio, const char* path) {
  return guarded([&] {
    require(audio != nullptr && path != nullptr, "NULL argument");
    skf::data::save_wav(path, audio->pcm.samples, audio->pcm.sample_rate);
  });
}

void skf_audio_free(skf_audio* audio) { delete audio; }

const double* skf_audio_samples(const skf_audio* audio, size_t* count) {
  if (count) *count = audio ? audio->pcm.samples.size() : 0;
  return audio ? audio->pcm.samples.data() : nullptr;
}

int skf_audio_sample_rate(const skf_audio* audio) { return audio ? audio->pcm.sample_rate : 0; }

skf_status skf_audio_features_json(const skf_audio* audio, double fps, char** json_out) {
  return guarded([&] {
    require(audio != nullptr && json_out != nullptr, "NULL argument");
    *json_out = nullptr;
    const auto track = skf::audio::extract_features(audio->pcm.samples, audio->pcm.sample_rate, fps);
    *json_out = dup_string(skf::audio::features_to_json(track));
  });
}

skf_status skf_config_create(skf_config** out) {
  return guarded([&] {
    require(out != nullptr, "NULL argument");
    *out = new skf_config{};
  });
}

skf_status skf_config_load_file(skf_config* config, const char* path) {
  return guarded([&] {
    require(config != nullptr && path != nullptr, "NULL argument");
    skf::train::TrainConfig next = config->config;
    std::ifstream in(path, std::ios::binary);
    if (!in) skf::fail(skf::ErrorKind::kIo, std::string("cannot open config '") + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    skf::train::apply_config_text(next, buf.str());
    config->config = next;
  });
}

skf_status skf_config_set(skf_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config != nullptr && key != nullptr && value != nullptr, "NULL argument");
    skf::train::apply_config_value(config->config, key, value);
  });
}

skf_status skf_config_to_json(const skf_config* config, char** json_out) {
  return guarded([&] {
    require(config != nullptr && json_out != nullptr, "NULL argument");
    *json_out = nullptr;
    *json_out = dup_string(skf::train::config_to_json(config->config));
  });
}

void skf_config_free(skf_config* config) { delete config; }

skf_status skf_train(const skf_config* config, const char* ckpt_path, const char* log_path, const char* resume_path) {
  return guarded([&] {
    require(config != nullptr && ckpt_path != nullptr, "NULL argument");
    const auto& c = config->config;
    c.validate();
    std::optional<skf::train::Checkpoint> resume;
    if (resume_path) resume = skf::train::load_checkpoint(resume_path);
    skf::train::TrainHooks hooks;
    hooks.checkpoint_path = ckpt_path;
    if (log_path) hooks.log_path = log_path;
    if (resume) hooks.resume = &*resume;
    if (c.stage == skf::train::Stage::kVae) {
      skf::train::train_vae(c, skf::train::load_dataset(c), hooks);
      return;
    }
    if (c.vae_checkpoint.empty()) skf::fail(skf::ErrorKind::kConfig, "diffusion stage needs vae_checkpoint");
    const auto vae = skf::train::load_checkpoint(c.vae_checkpoint);
    skf::train::TrainConfig data_config = c;
    data_config.model = vae.config.model;
    skf::train::train_diffusion(c, skf::train::load_dataset(data_config), vae, hooks);
  });
}

skf_status skf_model_load(const char* ckpt_path, skf_model** out) {
  return guarded([&] {
    require(ckpt_path != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    *out = new skf_model{skf::train::Pipeline(skf::train::load_checkpoint(ckpt_path))};
  });
}

void skf_model_free(skf_model* model) { delete model; }

int skf_model_has_diffusion(const skf_model* model) { return model && model->pipeline.has_denoiser() ? 1 : 0; }

skf_status skf_model_reconstruct(const skf_model* model, const skf_sequence* in, skf_sequence** out) {
  return guarded([&] {
    require(model != nullptr && in != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    const auto mask = in->mask ? *in->mask
                               : skf::data::ConfidenceMask::ones(in->sequence.frames(), in->sequence.joints());
    auto recon = model->pipeline.reconstruct(in->sequence, mask);
    *out = wrap(skf::data::SkeletonSequence(recon.frames(), recon.joints(), recon.dims(), recon.fps(),
                                            std::vector<double>(recon.data().begin(), recon.data().end()),
                                            in->sequence.parents()));
  });
}

skf_status skf_model_generate(const skf_model* model, const skf_audio* audio, uint64_t seed, size_t frames, double fps,
                              skf_sequence** out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    if (audio) {
      *out = wrap(model->pipeline.generate(audio->pcm.samples, audio->pcm.sample_rate, seed, frames, fps));
    } else {
      *out = wrap(model->pipeline.generate_unconditional(seed, frames, fps));
    }
  });
}

skf_status skf_fid_features(const double* real, size_t n_real, const double* gen, size_t n_gen, size_t k,
                            double* out) {
  return guarded([&] {
    require(real != nullptr && gen != nullptr && out != nullptr, "NULL argument");
    const auto r = Eigen::Map<const skf::Matrix>(real, static_cast<Eigen::Index>(n_real), static_cast<Eigen::Index>(k));
    const auto g = Eigen::Map<const skf::Matrix>(gen, static_cast<Eigen::Index>(n_gen), static_cast<Eigen::Index>(k));
    *out = skf::metrics::fid(skf::metrics::gaussian_stats(r), skf::metrics::gaussian_stats(g));
  });
}

skf_status skf_fid_sequences(const skf_sequence* const* real, size_t n_real, const skf_sequence* const* gen,
                             size_t n_gen, double* out) {
  return guarded([&] {
    require(out != nullptr, "NULL argument");
    *out = skf::metrics::fid(unwrap(real, n_real), unwrap(gen, n_gen));
  });
}

skf_status skf_diversity(const skf_sequence* const* seqs, size_t n, double* out) {
  return guarded([&] {
    require(out != nullptr, "NULL argument");
    *out = skf::metrics::diversity(unwrap(seqs, n));
  });
}

skf_status skf_sweep(const skf_sequence* const* clean, size_t n_clean, const skf_model* const* models,
                     const char* const* names, size_t n_models, const double* rates, size_t n_rates,
                     const uint64_t* seeds, size_t n_seeds, const char* pattern, char** csv_out, char** json_out) {
  return guarded([&] {
    if (csv_out) *csv_out = nullptr;
    if (json_out) *json_out = nullptr;
    require(models != nullptr && names != nullptr, "NULL model list");
    require(rates != nullptr && n_rates > 0 && seeds != nullptr && n_seeds > 0, "rates and seeds must be non-empty");
    std::vector<skf::metrics::SweepConfig> configs;
    for (size_t i = 0; i < n_models; ++i) {
      require(models[i] != nullptr && names[i] != nullptr, "model list contains NULL");
      const skf::train::Pipeline* p = &models[i]->pipeline;
      configs.push_back({names[i], [p](const skf::data::SkeletonSequence& x, const skf::data::ConfidenceMask& m) {
                           return p->reconstruct(x, m);
                         }});
    }
    skf::metrics::SweepOptions options;
    options.rates.assign(rates, rates + n_rates);
    options.seeds.assign(seeds, seeds + n_seeds);
    if (pattern) options.pattern = skf::data::parse_pattern(pattern);
    const auto report = skf::metrics::robustness_sweep(unwrap(clean, n_clean), configs, options);
    const std::string csv = report.csv();
    const std::string json = report.json();
    if (csv_out) *csv_out = dup_string(csv);
    if (json_out) *json_out = dup_string(json);
  });
}

skf_status skf_render(const skf_sequence* seq, const char* dir, const char* format, size_t* files_written) {
  return guarded([&] {
    require(seq != nullptr && dir != nullptr && format != nullptr, "NULL argument");
    if (files_written) *files_written = 0;
    const std::string f = format;
    size_t n = 0;
    if (f == "svg") {
      n = skf::render::write_svg_frames(seq->sequence, dir).size();
    } else if (f == "csv") {
      skf::render::write_csv(seq->sequence, dir, seq->mask ? &*seq->mask : nullptr);
      n = 1;
    } else {
      skf::fail(skf::ErrorKind::kInvalidArgument, "render format must be svg or csv, got '" + f + "'");
    }
    if (files_written) *files_written = n;
  });
}

}  // extern "C"
