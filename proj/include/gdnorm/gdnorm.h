// Copyright 2026 The gdnorm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GDNORM_GDNORM_H_
#define GDNORM_GDNORM_H_

/* C interface of libgdnorm. Every call returns a gdn_status; on failure the
 * message is available from gdn_last_error() on the calling thread until the
 * next call. Strings returned through char** are owned by the caller and
 * released with gdn_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GDN_API __declspec(dllexport)
#elif defined(__GNUC__)
#define GDN_API __attribute__((visibility("default")))
#else
#define GDN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gdn_status {
  GDN_OK = 0,
  GDN_ERR_CONTRACT = 1,
  GDN_ERR_DIMENSION = 2,
  GDN_ERR_INDEX = 3,
  GDN_ERR_DEGENERATE_BATCH = 4,
  GDN_ERR_DEGENERATE_ESTIMATE = 5,
  GDN_ERR_NUMERIC = 6,
  GDN_ERR_PROTOCOL = 7,
  GDN_ERR_IO = 8,
  GDN_ERR_CONFIG = 9,
  GDN_ERR_CHECKPOINT = 10,
  GDN_ERR_INVALID_ARGUMENT = 11, /* null handle or pointer */
  GDN_ERR_INTERNAL = 12
} gdn_status;

typedef struct gdn_config gdn_config;
typedef struct gdn_model gdn_model;

/* Receives progress lines; `line` is valid for the duration of the call. */
typedef void (*gdn_line_fn)(const char* line, void* user);

GDN_API const char* gdn_version(void);
GDN_API const char* gdn_source_revision(void);
GDN_API const char* gdn_status_name(gdn_status status);
GDN_API const char* gdn_last_error(void);
GDN_API void gdn_string_free(char* s);

/* Configuration. `path` may be NULL for the desk preset. `overrides` holds
 * n "dotted.key=value" strings. */
GDN_API gdn_status gdn_config_load(const char* path, const char* const* overrides, size_t n,
                                   gdn_config** out);
GDN_API gdn_status gdn_config_parse(const char* json, const char* const* overrides, size_t n,
                                    gdn_config** out);
GDN_API void gdn_config_free(gdn_config* cfg);
/* Applies GDNORM_SEED if set; *applied (may be NULL) reports whether it was. */
GDN_API gdn_status gdn_config_apply_seed_env(gdn_config* cfg, int* applied);
GDN_API gdn_status gdn_config_set_output_dir(gdn_config* cfg, const char* dir);
GDN_API gdn_status gdn_config_to_json(const gdn_config* cfg, char** out);
GDN_API gdn_status gdn_config_hash(const gdn_config* cfg, char** out);
GDN_API gdn_status gdn_config_seed(const gdn_config* cfg, uint64_t* out);

/* Commands. `format` is "json" or "table". */
GDN_API gdn_status gdn_gen(const gdn_config* cfg, const char* out_dir, char** manifest_path);
GDN_API gdn_status gdn_train(const gdn_config* cfg, gdn_line_fn on_line, void* user,
                             char** checkpoint_path);
GDN_API gdn_status gdn_eval(const gdn_config* cfg, const char* checkpoint, const char* format,
                            char** report);
GDN_API gdn_status gdn_sweep(const gdn_config* cfg, const char* format, gdn_line_fn on_line,
                             void* user, char** report);
/* kind: "mean", "sampled" or "domain"; noise_scale: "variance" or "stddev". */
GDN_API gdn_status gdn_export_path(const char* checkpoint, const char* kind, double lambda,
                                   uint64_t seed, size_t domain, const char* noise_scale,
                                   const char* out);
GDN_API gdn_status gdn_import_path(const gdn_config* cfg, const char* checkpoint,
                                   const char* path_file, const char* format, char** report);
/* suite: "unit" or "full". One line per criterion and note goes to on_line;
 * *all_passed is 1 when every criterion passed. */
GDN_API gdn_status gdn_repro(const char* suite, gdn_line_fn on_line, void* user,
                             int* all_passed);

/* Trained model. */
GDN_API gdn_status gdn_model_load(const char* checkpoint, gdn_model** out);
GDN_API void gdn_model_free(gdn_model* model);
GDN_API gdn_status gdn_model_dims(const gdn_model* model, size_t* input_dim, size_t* embed_dim,
                                  size_t* num_domains);
/* Embeds `rows` row-major inputs through the stored mean path. */
GDN_API gdn_status gdn_model_embed_mean(const gdn_model* model, const double* x, size_t rows,
                                        double* out);
/* Same through domain k's own normalization path. */
GDN_API gdn_status gdn_model_embed_domain(const gdn_model* model, size_t domain, const double* x,
                                          size_t rows, double* out);

#ifdef __cplusplus
}
#endif

#endif /* GDNORM_GDNORM_H_ */
