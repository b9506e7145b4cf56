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

/* Exercises libgdnorm through its C header only. */

#define _DEFAULT_SOURCE

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <unistd.h>

#include "gdnorm/gdnorm.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

#define EXPECT_STATUS(call, want)                                          \
  do {                                                                     \
    gdn_status got_ = (call);                                              \
    if (got_ != (want)) {                                                  \
      fprintf(stderr, "%s:%d: %s returned %s (%s), wanted %s\n", __FILE__, \
              __LINE__, #call, gdn_status_name(got_), gdn_last_error(),    \
              gdn_status_name(want));                                      \
      ++failures;                                                          \
    }                                                                      \
  } while (0)

static const char* tiny[] = {
    "seed=5",
    "data.generator.ids_per_domain=8",
    "data.generator.samples_per_id=6",
    "data.generator.dim=8",
    "data.generator.latent_dim=4",
    "data.generator.heldout_ids=6",
    "data.generator.heldout_samples_per_id=5",
    "model.hidden=[6]",
    "model.embed_dim=4",
    "train.epochs=1",
    "train.lr_decay_epoch=1",
    "eval.spread_paths=2",
    "eval.seeds=[0]",
};

static int lines_seen = 0;
static void count_line(const char* line, void* user) {
  (void)line;
  (void)user;
  ++lines_seen;
}

static void test_status_codes(void) {
  gdn_config* cfg = NULL;
  const char* bad[] = {"train.nope=1"};
  EXPECT_STATUS(gdn_config_parse("{}", bad, 1, &cfg), GDN_ERR_CONFIG);
  EXPECT(cfg == NULL);
  EXPECT(strstr(gdn_last_error(), "train.nope") != NULL);
  EXPECT_STATUS(gdn_config_parse("{\"trian\": {}}", NULL, 0, &cfg), GDN_ERR_CONFIG);
  EXPECT_STATUS(gdn_config_parse("{}", NULL, 0, NULL), GDN_ERR_INVALID_ARGUMENT);
  EXPECT_STATUS(gdn_config_load("/nonexistent/config.json", NULL, 0, &cfg), GDN_ERR_IO);
  EXPECT_STATUS(gdn_config_to_json(NULL, NULL), GDN_ERR_INVALID_ARGUMENT);

  int all = -1;
  EXPECT_STATUS(gdn_repro("bogus", NULL, NULL, &all), GDN_ERR_CONFIG);

  gdn_model* model = NULL;
  EXPECT_STATUS(gdn_model_load("/nonexistent/checkpoint.gdna", &model), GDN_ERR_IO);
  EXPECT(model == NULL);
  EXPECT(strlen(gdn_status_name(GDN_ERR_CHECKPOINT)) > 0);
  EXPECT(strlen(gdn_status_name((gdn_status)99)) > 0);
}

static void test_config(void) {
  gdn_config* cfg = NULL;
  EXPECT_STATUS(gdn_config_load(NULL, NULL, 0, &cfg), GDN_OK);
  uint64_t seed = 1;
  EXPECT_STATUS(gdn_config_seed(cfg, &seed), GDN_OK);
  EXPECT(seed == 0);

  char* json = NULL;
  EXPECT_STATUS(gdn_config_to_json(cfg, &json), GDN_OK);
  gdn_config* back = NULL;
  EXPECT_STATUS(gdn_config_parse(json, NULL, 0, &back), GDN_OK);
  char *h1 = NULL, *h2 = NULL;
  EXPECT_STATUS(gdn_config_hash(cfg, &h1), GDN_OK);
  EXPECT_STATUS(gdn_config_hash(back, &h2), GDN_OK);
  EXPECT(h1 && h2 && strcmp(h1, h2) == 0 && strlen(h1) == 64);
  gdn_string_free(json);
  gdn_string_free(h1);
  gdn_string_free(h2);

  setenv("GDNORM_SEED", "23", 1);
  int applied = 0;
  EXPECT_STATUS(gdn_config_apply_seed_env(back, &applied), GDN_OK);
  EXPECT(applied == 1);
  EXPECT_STATUS(gdn_config_seed(back, &seed), GDN_OK);
  EXPECT(seed == 23);
  setenv("GDNORM_SEED", "x", 1);
  EXPECT_STATUS(gdn_config_apply_seed_env(back, &applied), GDN_ERR_CONFIG);
  unsetenv("GDNORM_SEED");

  gdn_config_free(cfg);
  gdn_config_free(back);
  gdn_config_free(NULL);
}

static void test_pipeline(const char* dir) {
  gdn_config* cfg = NULL;
  EXPECT_STATUS(gdn_config_parse("{}", tiny, sizeof tiny / sizeof tiny[0], &cfg), GDN_OK);
  if (!cfg) return;
  char run_dir[512];
  snprintf(run_dir, sizeof run_dir, "%s/run", dir);
  EXPECT_STATUS(gdn_config_set_output_dir(cfg, run_dir), GDN_OK);

  char data_dir[512];
  snprintf(data_dir, sizeof data_dir, "%s/data", dir);
  char* manifest = NULL;
  EXPECT_STATUS(gdn_gen(cfg, data_dir, &manifest), GDN_OK);
  EXPECT(manifest && access(manifest, R_OK) == 0);
  gdn_string_free(manifest);

  char* ckpt = NULL;
  lines_seen = 0;
  EXPECT_STATUS(gdn_train(cfg, count_line, NULL, &ckpt), GDN_OK);
  EXPECT(lines_seen > 0);
  if (!ckpt) {
    gdn_config_free(cfg);
    return;
  }

  char* report = NULL;
  EXPECT_STATUS(gdn_eval(cfg, ckpt, "json", &report), GDN_OK);
  EXPECT(report && strstr(report, "mean_path") != NULL);
  gdn_string_free(report);
  report = NULL;
  EXPECT_STATUS(gdn_eval(cfg, ckpt, "xml", &report), GDN_ERR_CONFIG);
  EXPECT_STATUS(gdn_eval(cfg, "/nonexistent.gdna", "json", &report), GDN_ERR_IO);

  char path_file[512];
  snprintf(path_file, sizeof path_file, "%s/mean.gdna", dir);
  EXPECT_STATUS(gdn_export_path(ckpt, "mean", 0.0, 0, 0, "variance", path_file), GDN_OK);
  EXPECT_STATUS(gdn_export_path(ckpt, "domain", 0.0, 0, 9, "variance", path_file),
                GDN_ERR_INDEX);
  EXPECT_STATUS(gdn_export_path(ckpt, "sampled", -1.0, 0, 0, "variance", path_file),
                GDN_ERR_CONTRACT);
  EXPECT_STATUS(gdn_export_path(ckpt, "mean", 0.0, 0, 0, "variance", path_file), GDN_OK);
  EXPECT_STATUS(gdn_import_path(cfg, ckpt, path_file, "table", &report), GDN_OK);
  EXPECT(report && strstr(report, "imported_path") != NULL);
  gdn_string_free(report);

  gdn_model* model = NULL;
  EXPECT_STATUS(gdn_model_load(ckpt, &model), GDN_OK);
  size_t in = 0, embed = 0, domains = 0;
  EXPECT_STATUS(gdn_model_dims(model, &in, &embed, &domains), GDN_OK);
  EXPECT(in == 8 && embed == 4 && domains == 3);
  double x[16], mean_out[8], dom_out[8];
  for (int i = 0; i < 16; ++i) x[i] = sin(0.3 * i);
  EXPECT_STATUS(gdn_model_embed_mean(model, x, 2, mean_out), GDN_OK);
  EXPECT_STATUS(gdn_model_embed_domain(model, 1, x, 2, dom_out), GDN_OK);
  for (int i = 0; i < 8; ++i) EXPECT(isfinite(mean_out[i]) && isfinite(dom_out[i]));
  EXPECT_STATUS(gdn_model_embed_domain(model, 3, x, 2, dom_out), GDN_ERR_INDEX);
  EXPECT_STATUS(gdn_model_embed_mean(model, x, 0, mean_out), GDN_ERR_CONTRACT);
  EXPECT_STATUS(gdn_model_embed_mean(NULL, x, 2, mean_out), GDN_ERR_INVALID_ARGUMENT);
  gdn_model_free(model);

  gdn_string_free(ckpt);
  gdn_config_free(cfg);
}

int main(void) {
  EXPECT(strlen(gdn_version()) > 0);
  EXPECT(strlen(gdn_source_revision()) > 0);
  test_status_codes();
  test_config();

  char dir[] = "/tmp/gdnorm-capi-XXXXXX";
  if (!mkdtemp(dir)) {
    perror("mkdtemp");
    return 1;
  }
  test_pipeline(dir);
  char cmd[600];
  snprintf(cmd, sizeof cmd, "rm -rf '%s'", dir);
  if (system(cmd) != 0) fprintf(stderr, "could not remove %s\n", dir);

  if (failures) {
    fprintf(stderr, "%d C API check(s) failed\n", failures);
    return 1;
  }
  printf("C API checks passed\n");
  return 0;
}
