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

#include "gdnorm/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gdnorm/archive.hpp"
#include "gdnorm/errors.hpp"

namespace gdnorm {

using nlohmann::ordered_json;

namespace {

const std::vector<std::string> kBaselines{"mean_path", "single_paths", "ensemble",
                                          "sampled_path"};

ordered_json tree(const ExperimentConfig& c) {
  const auto& g = c.data.generator;
  const auto& t = c.train;
  const auto& e = c.eval;
  ordered_json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"dir", c.data.dir},
               {"generator",
                {{"num_domains", g.num_domains},
                 {"ids_per_domain", g.ids_per_domain},
                 {"samples_per_id", g.samples_per_id},
                 {"dim", g.dim},
                 {"latent_dim", g.latent_dim},
                 {"noise", g.noise},
                 {"shift_strength", g.shift_strength},
                 {"heldout_ids", g.heldout_ids},
                 {"heldout_samples_per_id", g.heldout_samples_per_id}}}};
  j["model"] = {{"hidden", c.model.hidden},
                {"embed_dim", c.model.embed_dim},
                {"eps", c.model.eps},
                {"momentum", c.model.momentum},
                {"tied_bn", c.model.tied_bn}};
  j["train"] = {{"lambda", t.lambda},
                {"lr", t.lr},
                {"lr_decay_epoch", t.lr_decay_epoch},
                {"lr_decay_factor", t.lr_decay_factor},
                {"weight_decay", t.weight_decay},
                {"epochs", t.epochs},
                {"iters_per_epoch", t.iters_per_epoch},
                {"batch_ids", t.batch_ids},
                {"batch_instances", t.batch_instances},
                {"mixed_batch", t.mixed_batch},
                {"margin", t.margin},
                {"id_weight", t.id_weight},
                {"triplet_weight", t.triplet_weight},
                {"n_paths", t.n_paths},
                {"noise_scale", to_string(t.noise_scale)},
                {"refine", t.refine}};
  j["eval"] = {{"baselines", e.baselines},
               {"lambda_grid", e.lambda_grid},
               {"seeds", e.seeds},
               {"spread_paths", e.spread_paths},
               {"queries_per_id", e.queries_per_id},
               {"batch_size", e.batch_size},
               {"fusion", to_string(e.fusion)},
               {"ensemble_weights", e.ensemble_weights}};
  return j;
}

template <class T>
void get(const ordered_json& j, const std::string& path, const char* key, T& out) {
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError("");
      for (const auto& x : v) {
        if (!x.is_number_unsigned()) throw ConfigError("");
      }
    }
    out = v.template get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type");
  }
}

ExperimentConfig from_tree(const ordered_json& j) {
  ExperimentConfig c;
  get(j, "", "seed", c.seed);
  get(j, "", "output_dir", c.output_dir);
  const auto& d = j.at("data");
  get(d, "data.", "dir", c.data.dir);
  const auto& g = d.at("generator");
  auto& gs = c.data.generator;
  get(g, "data.generator.", "num_domains", gs.num_domains);
  get(g, "data.generator.", "ids_per_domain", gs.ids_per_domain);
  get(g, "data.generator.", "samples_per_id", gs.samples_per_id);
  get(g, "data.generator.", "dim", gs.dim);
  get(g, "data.generator.", "latent_dim", gs.latent_dim);
  get(g, "data.generator.", "noise", gs.noise);
  get(g, "data.generator.", "shift_strength", gs.shift_strength);
  get(g, "data.generator.", "heldout_ids", gs.heldout_ids);
  get(g, "data.generator.", "heldout_samples_per_id", gs.heldout_samples_per_id);
  gs.seed = c.seed;

  const auto& m = j.at("model");
  get(m, "model.", "hidden", c.model.hidden);
  get(m, "model.", "embed_dim", c.model.embed_dim);
  get(m, "model.", "eps", c.model.eps);
  get(m, "model.", "momentum", c.model.momentum);
  get(m, "model.", "tied_bn", c.model.tied_bn);

  const auto& t = j.at("train");
  auto& tc = c.train;
  get(t, "train.", "lambda", tc.lambda);
  get(t, "train.", "lr", tc.lr);
  get(t, "train.", "lr_decay_epoch", tc.lr_decay_epoch);
  get(t, "train.", "lr_decay_factor", tc.lr_decay_factor);
  get(t, "train.", "weight_decay", tc.weight_decay);
  get(t, "train.", "epochs", tc.epochs);
  get(t, "train.", "iters_per_epoch", tc.iters_per_epoch);
  get(t, "train.", "batch_ids", tc.batch_ids);
  get(t, "train.", "batch_instances", tc.batch_instances);
  get(t, "train.", "mixed_batch", tc.mixed_batch);
  get(t, "train.", "margin", tc.margin);
  get(t, "train.", "id_weight", tc.id_weight);
  get(t, "train.", "triplet_weight", tc.triplet_weight);
  get(t, "train.", "n_paths", tc.n_paths);
  std::string noise;
  get(t, "train.", "noise_scale", noise);
  tc.noise_scale = parse_noise_scale(noise);
  get(t, "train.", "refine", tc.refine);
  tc.seed = c.seed;

  const auto& e = j.at("eval");
  auto& ec = c.eval;
  get(e, "eval.", "baselines", ec.baselines);
  get(e, "eval.", "lambda_grid", ec.lambda_grid);
  get(e, "eval.", "seeds", ec.seeds);
  get(e, "eval.", "spread_paths", ec.spread_paths);
  get(e, "eval.", "queries_per_id", ec.queries_per_id);
  get(e, "eval.", "batch_size", ec.batch_size);
  std::string fusion;
  get(e, "eval.", "fusion", fusion);
  ec.fusion = parse_fusion(fusion);
  get(e, "eval.", "ensemble_weights", ec.ensemble_weights);
  return c;
}

// Overlays `src` onto `dst`; every key of src must already exist in dst.
void merge(ordered_json& dst, const ordered_json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    if (dst[key].is_object()) {
      merge(dst[key], value, full);
    } else {
      if (value.is_object()) throw ConfigError("config key '" + full + "' is not a section");
      dst[key] = value;
    }
  }
}

void apply_override(ordered_json& root, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + kv + "' is not of the form key=value");
  }
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  ordered_json* node = &root;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' is a section");
  ordered_json value = ordered_json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  *node = std::move(value);
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.train.lr = 0.05;
  return c;
}

std::string ExperimentConfig::to_json() const { return tree(*this).dump(2); }

std::string ExperimentConfig::hash() const {
  auto j = tree(*this);
  j.erase("output_dir");
  const std::string s = j.dump();
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void ExperimentConfig::validate() const {
  train.validate();
  try {
    data.generator.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("data.generator: ") + e.what());
  }
  if (model.embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
  for (std::size_t h : model.hidden) {
    if (h < 1) throw ConfigError("model.hidden widths must be >= 1");
  }
  if (!(model.eps > 0.0)) throw ConfigError("model.eps must be > 0");
  if (!(model.momentum >= 0.0 && model.momentum < 1.0)) {
    throw ConfigError("model.momentum must be in [0, 1)");
  }
  if (eval.baselines.empty()) throw ConfigError("eval.baselines is empty");
  for (const auto& b : eval.baselines) {
    if (std::find(kBaselines.begin(), kBaselines.end(), b) == kBaselines.end()) {
      throw ConfigError("eval.baselines: unknown baseline '" + b + "'");
    }
  }
  if (eval.lambda_grid.empty()) throw ConfigError("eval.lambda_grid is empty");
  for (double l : eval.lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("eval.lambda_grid entries must be >= 0");
  }
  if (eval.seeds.empty()) throw ConfigError("eval.seeds is empty");
  if (eval.spread_paths < 1) throw ConfigError("eval.spread_paths must be >= 1");
  if (eval.queries_per_id < 1) throw ConfigError("eval.queries_per_id must be >= 1");
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  if (!eval.ensemble_weights.empty() &&
      eval.ensemble_weights.size() != data.generator.num_domains) {
    throw ConfigError("eval.ensemble_weights needs one weight per source domain");
  }
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

ExperimentConfig parse_config(const std::string& json_text,
                              std::span<const std::string> overrides) {
  ordered_json root = tree(ExperimentConfig::defaults());
  if (!json_text.empty()) {
    ordered_json doc;
    try {
      doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    merge(root, doc, "");
  }
  for (const auto& kv : overrides) apply_override(root, kv);
  ExperimentConfig c = from_tree(root);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, std::span<const std::string> overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  return parse_config(text, overrides);
}

bool apply_seed_env(ExperimentConfig& cfg) {
  const char* env = std::getenv("GDNORM_SEED");
  if (env == nullptr || *env == '\0') return false;
  const std::string s(env);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 20) {
    throw ConfigError("GDNORM_SEED must be an unsigned integer, got '" + s + "'");
  }
  try {
    cfg.seed = std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError("GDNORM_SEED is out of range: " + s);
  }
  cfg.data.generator.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  return true;
}

const char* to_string(Fusion f) { return f == Fusion::Distance ? "distance" : "embedding"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "distance") return Fusion::Distance;
  if (s == "embedding") return Fusion::Embedding;
  throw ConfigError("eval.fusion must be 'distance' or 'embedding', got '" + s + "'");
}

}  // namespace gdnorm
