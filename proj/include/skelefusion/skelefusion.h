/*
 * Copyright 2026 The SkeleFusion Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * SkeleFusion C API.
 *
 * Every fallible call returns an skf_status. On failure the message of the
 * most recent error on the calling thread is available from
 * skf_last_error(). Objects are opaque handles released with their _free
 * function; passing NULL to a _free function is a no-op. Strings returned
 * through char** out-parameters are released with skf_string_free.
 */

#ifndef SKELEFUSION_SKELEFUSION_H_
#define SKELEFUSION_SKELEFUSION_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SKF_API __declspec(dllexport)
#else
#define SKF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum skf_status {
  SKF_OK = 0,
  SKF_ERR_INVALID_ARGUMENT = 1,
  SKF_ERR_CONFIG = 2,
  SKF_ERR_IO = 3,
  SKF_ERR_PARSE = 4,
  SKF_ERR_VERSION = 5,
  SKF_ERR_SHAPE = 6,
  SKF_ERR_DEGENERATE = 7,
  SKF_ERR_LENGTH = 8,
  SKF_ERR_INTEGRITY = 9,
  SKF_ERR_SYMMETRY = 10,
  SKF_ERR_SAMPLE_SIZE = 11,
  SKF_ERR_DIMENSION = 12,
  SKF_ERR_DIVERGENCE = 13,
  SKF_ERR_INTERNAL = 14
} skf_status;

typedef struct skf_sequence skf_sequence;
typedef struct skf_audio skf_audio;
typedef struct skf_config skf_config;
typedef struct skf_model skf_model;

SKF_API const char* skf_version(void);
SKF_API const char* skf_last_error(void);
SKF_API const char* skf_status_name(skf_status status);
SKF_API void skf_string_free(char* s);

/* ---- Sequences -------------------------------------------------------- */

/* data holds frames * joints * dims doubles, frame-major. */
SKF_API skf_status skf_sequence_create(size_t frames, size_t joints, size_t dims, double fps, const double* data,
                                       skf_sequence** out);
SKF_API skf_status skf_sequence_load(const char* path, skf_sequence** out);
SKF_API skf_status skf_sequence_save(const skf_sequence* seq, const char* path);
SKF_API void skf_sequence_free(skf_sequence* seq);

SKF_API size_t skf_sequence_frames(const skf_sequence* seq);
SKF_API size_t skf_sequence_joints(const skf_sequence* seq);
SKF_API size_t skf_sequence_dims(const skf_sequence* seq);
SKF_API double skf_sequence_fps(const skf_sequence* seq);
SKF_API const double* skf_sequence_data(const skf_sequence* seq);
/* frames * joints bytes of 0/1, or NULL when the sequence has no mask. */
SKF_API const unsigned char* skf_sequence_mask(const skf_sequence* seq);
SKF_API skf_status skf_sequence_set_mask(skf_sequence* seq, const unsigned char* mask);

/* pattern: "random-joint", "limb-coherent" or "temporal-burst". */
SKF_API skf_status skf_sequence_corrupt(const skf_sequence* in, double rate, const char* pattern, uint64_t seed,
                                        skf_sequence** out);

/* Synthetic dance and its click track. Either output may be NULL. */
SKF_API skf_status skf_synth(size_t frames, size_t joints, double bpm, uint64_t seed, skf_sequence** seq_out,
                             skf_audio** audio_out);

/* ---- Audio ------------------------------------------------------------ */

SKF_API skf_status skf_audio_load(const char* path, skf_audio** out);
SKF_API skf_status skf_audio_save(const skf_audio* audio, const char* path);
SKF_API void skf_audio_free(skf_audio* audio);
SKF_API const double* skf_audio_samples(const skf_audio* audio, size_t* count);
SKF_API int skf_audio_sample_rate(const skf_audio* audio);
/* {"temporal": [[35 values]...], "mel": [[...]...]} at the given motion fps. */
SKF_API skf_status skf_audio_features_json(const skf_audio* audio, double fps, char** json_out);

/* ---- Training --------------------------------------------------------- */

SKF_API skf_status skf_config_create(skf_config** out);
/* Reads key=value lines or a JSON object; later calls override earlier ones. */
SKF_API skf_status skf_config_load_file(skf_config* config, const char* path);
SKF_API skf_status skf_config_set(skf_config* config, const char* key, const char* value);
SKF_API skf_status skf_config_to_json(const skf_config* config, char** json_out);
SKF_API void skf_config_free(skf_config* config);

/* Runs the configured stage and writes the checkpoint to ckpt_path.
 * log_path (CSV step,loss,recon,kl) and resume_path may be NULL. */
SKF_API skf_status skf_train(const skf_config* config, const char* ckpt_path, const char* log_path,
                             const char* resume_path);

/* ---- Inference -------------------------------------------------------- */

SKF_API skf_status skf_model_load(const char* ckpt_path, skf_model** out);
SKF_API void skf_model_free(skf_model* model);
SKF_API int skf_model_has_diffusion(const skf_model* model);

/* Uses the sequence's mask when it has one, else treats every joint as seen. */
SKF_API skf_status skf_model_reconstruct(const skf_model* model, const skf_sequence* in, skf_sequence** out);
/* audio may be NULL for unconditional sampling. */
SKF_API skf_status skf_model_generate(const skf_model* model, const skf_audio* audio, uint64_t seed, size_t frames,
                                      double fps, skf_sequence** out);

/* ---- Metrics ---------------------------------------------------------- */

/* Feature matrices are row-major n x k. */
SKF_API skf_status skf_fid_features(const double* real, size_t n_real, const double* gen, size_t n_gen, size_t k,
                                    double* out);
/* Descriptor-space FID between two sets of sequences. */
SKF_API skf_status skf_fid_sequences(const skf_sequence* const* real, size_t n_real, const skf_sequence* const* gen,
                                     size_t n_gen, double* out);
SKF_API skf_status skf_diversity(const skf_sequence* const* seqs, size_t n, double* out);

/* Missing-data sweep: every model reconstructs every clean sequence under
 * occlusions at each rate and seed. Outputs are CSV rate,config,fid and a
 * JSON summary; either may be NULL. */
SKF_API skf_status skf_sweep(const skf_sequence* const* clean, size_t n_clean, const skf_model* const* models,
                             const char* const* names, size_t n_models, const double* rates, size_t n_rates,
                             const uint64_t* seeds, size_t n_seeds, const char* pattern, char** csv_out,
                             char** json_out);

/* ---- Rendering -------------------------------------------------------- */

/* format "svg" writes one file per frame, "csv" writes joints.csv. */
SKF_API skf_status skf_render(const skf_sequence* seq, const char* dir, const char* format, size_t* files_written);

#ifdef __cplusplus
}
#endif

#endif /* SKELEFUSION_SKELEFUSION_H_ */
