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

#include "gdnorm/gdnorm.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "gdnorm/archive.hpp"
#include "gdnorm/errors.hpp"
#include "gdnorm/experiment.hpp"
#include "gdnorm/repro.hpp"

struct gdn_config {
  gdnorm::ExperimentConfig cfg;
};

struct gdn_model {
  gdnorm::EmbedNet net;
  gdnorm::BnPath mean_path;
};

namespace {

thread_local std::string last_error;

struct InvalidArgument {
  const char* what;
};

gdn_status status_of(gdnorm::ErrorCode code) { return static_cast<gdn_status>(code); }

template <class F>
gdn_status guard(F&& f) {
  last_error.clear();
  try {
    f();
    return GDN_OK;
  } catch (const InvalidArgument& e) {
    last_error = e.what;
    return GDN_ERR_INVALID_ARGUMENT;
  } catch (const gdnorm::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GDN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GDN_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return GDN_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw InvalidArgument{what};
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> collect(const char* const* overrides, size_t n) {
  if (n > 0) need(overrides, "overrides is null");
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    need(overrides[i], "override entry is null");
    out.emplace_back(overrides[i]);
  }
  return out;
}

gdnorm::LogSink sink(gdn_line_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

std::string fmt_or_default(const char* format) { return format ? format : "table"; }

void embed_into(const gdn_model* model, const gdnorm::BnMode& mode, const double* x, size_t rows,
                double* out) {
  need(x, "x is null");
  need(out, "out is null");
  const auto& spec = model->net.spec();
  gdnorm::require(rows > 0, "embed: rows must be > 0");
  gdnorm::Tensor in(gdnorm::Shape{rows, spec.input_dim},
                    std::vector<double>(x, x + rows * spec.input_dim));
  const gdnorm::Tensor emb = model->net.embed(in, mode);
  std::memcpy(out, emb.values().data(), emb.size() * sizeof(double));
}

}  // namespace

extern "C" {

const char* gdn_version(void) { return GDNORM_VERSION; }

const char* gdn_source_revision(void) { return gdnorm::source_revision(); }

const char* gdn_status_name(gdn_status status) {
  switch (status) {
    case GDN_OK: return "ok";
    case GDN_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GDN_ERR_INTERNAL: return "internal";
    default:
      if (status >= GDN_ERR_CONTRACT && status <= GDN_ERR_CHECKPOINT) {
        return gdnorm::to_string(static_cast<gdnorm::ErrorCode>(status));
      }
      return "unknown";
  }
}

const char* gdn_last_error(void) { return last_error.c_str(); }

void gdn_string_free(char* s) { std::free(s); }

gdn_status gdn_config_load(const char* path, const char* const* overrides, size_t n,
                           gdn_config** out) {
  return guard([&] {
    need(out, "out is null");
    *out = nullptr;
    const auto ov = collect(overrides, n);
    *out = new gdn_config{gdnorm::load_config(path ? path : "", ov)};
  });
}

gdn_status gdn_config_parse(const char* json, const char* const* overrides, size_t n,
                            gdn_config** out) {
  return guard([&] {
    need(out, "out is null");
    need(json, "json is null");
    *out = nullptr;
    const auto ov = collect(overrides, n);
    *out = new gdn_config{gdnorm::parse_config(json, ov)};
  });
}

void gdn_config_free(gdn_config* cfg) { delete cfg; }

gdn_status gdn_config_apply_seed_env(gdn_config* cfg, int* applied) {
  return guard([&] {
    need(cfg, "config is null");
    const bool a = gdnorm::apply_seed_env(cfg->cfg);
    if (applied) *applied = a ? 1 : 0;
  });
}

gdn_status gdn_config_set_output_dir(gdn_config* cfg, const char* dir) {
  return guard([&] {
    need(cfg, "config is null");
    need(dir, "dir is null");
    cfg->cfg.output_dir = dir;
  });
}

gdn_status gdn_config_to_json(const gdn_config* cfg, char** out) {
  return guard([&] {
    need(cfg, "config is null");
    need(out, "out is null");
    *out = dup(cfg->cfg.to_json());
  });
}

gdn_status gdn_config_hash(const gdn_config* cfg, char** out) {
  return guard([&] {
    need(cfg, "config is null");
    need(out, "out is null");
    *out = dup(cfg->cfg.hash());
  });
}

gdn_status gdn_config_seed(const gdn_config* cfg, uint64_t* out) {
  return guard([&] {
    need(cfg, "config is null");
    need(out, "out is null");
    *out = cfg->cfg.seed;
  });
}

gdn_status gdn_gen(const gdn_config* cfg, const char* out_dir, char** manifest_path) {
  return guard([&] {
    need(cfg, "config is null");
    need(out_dir, "out_dir is null");
    const auto res = gdnorm::run_gen(cfg->cfg, out_dir);
    if (manifest_path) *manifest_path = dup(res.manifest);
  });
}

gdn_status gdn_train(const gdn_config* cfg, gdn_line_fn on_line, void* user,
                     char** checkpoint_path) {
  return guard([&] {
    need(cfg, "config is null");
    const auto res = gdnorm::run_train(cfg->cfg, sink(on_line, user));
    if (checkpoint_path) *checkpoint_path = dup(res.checkpoint);
  });
}

gdn_status gdn_eval(const gdn_config* cfg, const char* checkpoint, const char* format,
                    char** report) {
  return guard([&] {
    need(cfg, "config is null");
    need(checkpoint, "checkpoint is null");
    const std::string f = fmt_or_default(format);
    if (f != "json" && f != "table") throw gdnorm::ConfigError("unknown format '" + f + "'");
    const auto rows = gdnorm::run_eval(cfg->cfg, checkpoint);
    if (report) *report = dup(gdnorm::format_results(rows, f));
  });
}

gdn_status gdn_sweep(const gdn_config* cfg, const char* format, gdn_line_fn on_line, void* user,
                     char** report) {
  return guard([&] {
    need(cfg, "config is null");
    const std::string f = fmt_or_default(format);
    if (f != "json" && f != "table") throw gdnorm::ConfigError("unknown format '" + f + "'");
    const auto rows = gdnorm::run_sweep(cfg->cfg, sink(on_line, user));
    if (report) *report = dup(gdnorm::format_sweep(rows, f));
  });
}

gdn_status gdn_export_path(const char* checkpoint, const char* kind, double lambda, uint64_t seed,
                           size_t domain, const char* noise_scale, const char* out) {
  return guard([&] {
    need(checkpoint, "checkpoint is null");
    need(out, "out is null");
    gdnorm::PathRequest req;
    if (kind) req.kind = kind;
    req.lambda = lambda;
    req.seed = seed;
    req.domain = domain;
    if (noise_scale) req.noise_scale = gdnorm::parse_noise_scale(noise_scale);
    gdnorm::export_path(checkpoint, req, out);
  });
}

gdn_status gdn_import_path(const gdn_config* cfg, const char* checkpoint, const char* path_file,
                           const char* format, char** report) {
  return guard([&] {
    need(cfg, "config is null");
    need(checkpoint, "checkpoint is null");
    need(path_file, "path_file is null");
    const std::string f = fmt_or_default(format);
    if (f != "json" && f != "table") throw gdnorm::ConfigError("unknown format '" + f + "'");
    const auto row = gdnorm::import_path(cfg->cfg, checkpoint, path_file);
    if (report) *report = dup(gdnorm::format_results({row}, f));
  });
}

gdn_status gdn_repro(const char* suite, gdn_line_fn on_line, void* user, int* all_passed) {
  return guard([&] {
    need(suite, "suite is null");
    auto emit = sink(on_line, user);
    const auto report = gdnorm::run_repro(
        suite,
        [&](const gdnorm::CriterionResult& r) {
          if (emit) emit(gdnorm::format_criterion(r));
        },
        emit);
    if (all_passed) *all_passed = report.passed() ? 1 : 0;
  });
}

gdn_status gdn_model_load(const char* checkpoint, gdn_model** out) {
  return guard([&] {
    need(checkpoint, "checkpoint is null");
    need(out, "out is null");
    *out = nullptr;
    const auto archive = gdnorm::read_archive(checkpoint);
    *out = new gdn_model{gdnorm::load_model(archive), gdnorm::checkpoint_mean_path(archive)};
  });
}

void gdn_model_free(gdn_model* model) { delete model; }

gdn_status gdn_model_dims(const gdn_model* model, size_t* input_dim, size_t* embed_dim,
                          size_t* num_domains) {
  return guard([&] {
    need(model, "model is null");
    const auto& spec = model->net.spec();
    if (input_dim) *input_dim = spec.input_dim;
    if (embed_dim) *embed_dim = spec.embed_dim;
    if (num_domains) *num_domains = spec.num_domains;
  });
}

gdn_status gdn_model_embed_mean(const gdn_model* model, const double* x, size_t rows,
                                double* out) {
  return guard([&] {
    need(model, "model is null");
    embed_into(model, gdnorm::bn_mode::Path{&model->mean_path}, x, rows, out);
  });
}

gdn_status gdn_model_embed_domain(const gdn_model* model, size_t domain, const double* x,
                                  size_t rows, double* out) {
  return guard([&] {
    need(model, "model is null");
    if (domain >= model->net.num_domains()) throw gdnorm::IndexError("domain out of range");
    embed_into(model, gdnorm::bn_mode::Domain{domain}, x, rows, out);
  });
}

}  // extern "C"
