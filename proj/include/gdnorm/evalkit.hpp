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
#include "gdnorm/gp.hpp"
#include "gdnorm/model.hpp"
#include "gdnorm/train.hpp"

namespace gdnorm {

struct RetrievalResult {
  double map = 0.0;
  // cmc[r] = fraction of queries with a true match within the top r + 1.
  std::vector<double> cmc;
  std::vector<double> average_precision;
  // Wall time of embedding + distance computation per query/gallery batch.
  double seconds_per_batch = 0.0;
  std::uint64_t forward_passes = 0;
  std::size_t batches = 0;

  double rank(std::size_t k) const;  // CMC at rank k (1-based)
};

struct RetrievalSplit {
  std::vector<Sample> query;
  std::vector<Sample> gallery;
};

// The first `queries_per_id` samples of every identity become queries, the
// rest gallery. Every identity needs more than queries_per_id samples.
RetrievalSplit make_split(const DomainDataset& ds, std::size_t queries_per_id = 2);

// Euclidean distance matrix, rows = queries.
std::vector<double> distance_matrix(const Tensor& query, const Tensor& gallery);

// Ranks the gallery by ascending distance for every query, ties broken by
// gallery index. AP averages precision at each true match; CMC counts the
// first true match. Throws ProtocolError if a query identity has no gallery
// match.
RetrievalResult rank_distances(std::span<const double> dist, std::size_t num_query,
                               std::span<const std::size_t> query_ids,
                               std::span<const std::size_t> gallery_ids);
RetrievalResult compute_map_cmc(const Tensor& query, std::span<const std::size_t> query_ids,
                                const Tensor& gallery, std::span<const std::size_t> gallery_ids);

struct EvalOptions {
  std::size_t batch_size = 64;
};

RetrievalResult eval_path(const EmbedNet& net, const BnPath& path, const RetrievalSplit& split,
                          const EvalOptions& opt = {});
RetrievalResult eval_mean_path(const EmbedNet& net, const GpEstimate& gp,
                               const RetrievalSplit& split, const EvalOptions& opt = {});
RetrievalResult eval_single_path(const EmbedNet& net, std::size_t domain,
                                 const RetrievalSplit& split, const EvalOptions& opt = {});

enum class Fusion { Distance, Embedding };

struct EnsembleSpec {
  std::vector<BnPath> paths;
  std::vector<double> weights;

  void validate() const;
  static EnsembleSpec uniform(const EmbedNet& net);
};

RetrievalResult eval_ensemble(const EmbedNet& net, const EnsembleSpec& spec,
                              const RetrievalSplit& split, const EvalOptions& opt = {},
                              Fusion fusion = Fusion::Distance);

struct SpreadRow {
  double lambda = 0.0;
  double min_map = 0.0, mean_map = 0.0, max_map = 0.0;
  double mean_path_map = 0.0;
  std::size_t paths = 0;

  double width() const { return max_map - min_map; }
};

// Samples `paths` paths per lambda from the model's estimate and scores
// each one. The same noise seed is used at every lambda.
std::vector<SpreadRow> path_spread(const EmbedNet& net, const RetrievalSplit& split,
                                   std::span<const double> lambdas, std::size_t paths,
                                   std::uint64_t seed, NoiseScale scale = NoiseScale::Variance,
                                   const EvalOptions& opt = {});

struct SweepRow {
  double lambda = 0.0;
  RetrievalResult mean_path;
  SpreadRow spread;
};

// Trains one model per lambda and scores its mean path on `eval_split`;
// each row also carries the sampled-path spread at that lambda.
std::vector<SweepRow> sweep_lambda(std::span<const double> grid,
                                   std::span<const DomainDataset> sources,
                                   const RetrievalSplit& eval_split, const NetSpec& spec,
                                   const TrainConfig& base, std::size_t spread_paths,
                                   const EvalOptions& opt = {});

}  // namespace gdnorm
