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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gdnorm/config.hpp"
#include "gdnorm/evalkit.hpp"

namespace gdnorm {

// Revision of the source tree the library was built from.
const char* source_revision();

using LogSink = std::function<void(const std::string&)>;

struct GenOutputs {
  std::string dir;
  std::string manifest;
  std::vector<std::string> files;  // sources in domain order, then held-out
};

// Writes one JSONL file per source domain and one for the held-out domain,
// plus manifest.json with seeds, sample counts and SHA-256 per file.
GenOutputs run_gen(const ExperimentConfig& cfg, const std::string& out_dir);

// Datasets from cfg.data.dir when set (verified against its manifest),
// otherwise generated in memory from cfg.data.generator.
Benchmark load_benchmark(const ExperimentConfig& cfg);

struct TrainOutputs {
  std::string run_dir;
  std::string checkpoint;
  std::string checkpoint_sha256;
  std::vector<EpochRecord> log;
};

// Trains on the source domains and writes to cfg.output_dir: config.json,
// seeds.json, source.json, metrics.jsonl, checkpoint.gdna, mean_path.gdna
// and domain_path_{k}.gdna.
TrainOutputs run_train(const ExperimentConfig& cfg, const LogSink& log = {});

struct ResultRow {
  std::string baseline;  // mean_path, single_path, ensemble, sampled_path, imported_path
  std::optional<std::size_t> domain;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  RetrievalResult result;

  std::string to_json() const;
};

// Evaluates the checkpoint on the held-out domain for every baseline in
// cfg.eval.baselines. Writes results.jsonl and results.txt to cfg.output_dir.
std::vector<ResultRow> run_eval(const ExperimentConfig& cfg, const std::string& checkpoint);

std::string format_results(const std::vector<ResultRow>& rows, const std::string& format);

// Trains one model per cfg.eval.lambda_grid entry; writes sweep.jsonl.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const LogSink& log = {});
std::string sweep_row_json(const SweepRow& row);
std::string format_sweep(const std::vector<SweepRow>& rows, const std::string& format);

struct PathRequest {
  std::string kind = "mean";  // mean, sampled, domain
  double lambda = 0.6;
  std::uint64_t seed = 0;
  std::size_t domain = 0;
  NoiseScale noise_scale = NoiseScale::Variance;
};

// Writes the requested path of a checkpoint as a path archive.
void export_path(const std::string& checkpoint, const PathRequest& req, const std::string& out);
// Scores an imported path with the checkpoint's network on the held-out
// domain. A width mismatch is a CheckpointError.
ResultRow import_path(const ExperimentConfig& cfg, const std::string& checkpoint,
                      const std::string& path_file);

}  // namespace gdnorm
