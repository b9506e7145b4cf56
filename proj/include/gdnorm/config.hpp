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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdnorm/datagen.hpp"
#include "gdnorm/evalkit.hpp"
#include "gdnorm/train.hpp"

namespace gdnorm {

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t embed_dim = 32;
  double eps = 1e-5;
  double momentum = 0.9;
  // One normalization slot for all domains (shared-BN baseline).
  bool tied_bn = false;
};

struct DataConfig {
  GenSpec generator;
  // Directory written by `gen`; empty means generate in memory.
  std::string dir;
};

struct EvalConfig {
  // Any of: mean_path, single_paths, ensemble, sampled_path.
  std::vector<std::string> baselines{"mean_path", "single_paths", "ensemble", "sampled_path"};
  std::vector<double> lambda_grid{0.0, 0.3, 0.6, 1.0};
  // Noise seeds for sampled paths; one result row per seed.
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t spread_paths = 100;
  std::size_t queries_per_id = 2;
  std::size_t batch_size = 64;
  Fusion fusion = Fusion::Distance;
  // Ensemble mixture weights; empty means uniform.
  std::vector<double> ensemble_weights;
};

// Desk-scale experiment description. Serialized as JSON; unknown keys are
// rejected with the offending key path.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  // The desk benchmark preset. Differs from library defaults in the SGD
  // learning rate.
  static ExperimentConfig defaults();

  std::string to_json() const;
  // SHA-256 of the resolved config without output_dir.
  std::string hash() const;
  void validate() const;
};

// Parses a config document on top of the defaults, then applies `key=value`
// overrides (dotted keys, JSON or bare-string values). Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text,
                              std::span<const std::string> overrides = {});
// Empty path means defaults only.
ExperimentConfig load_config(const std::string& path,
                             std::span<const std::string> overrides = {});
// Replaces the seed with GDNORM_SEED when set; throws ConfigError if it is
// not an unsigned integer. Returns true when applied.
bool apply_seed_env(ExperimentConfig& cfg);

const char* to_string(Fusion f);
Fusion parse_fusion(const std::string& s);

}  // namespace gdnorm
