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

#include "gdnorm/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "gdnorm/errors.hpp"

namespace gdnorm {

double RetrievalResult::rank(std::size_t k) const {
  if (k == 0 || cmc.empty()) throw IndexError("CMC rank out of range");
  return cmc[std::min(k, cmc.size()) - 1];
}

RetrievalSplit make_split(const DomainDataset& ds, std::size_t queries_per_id) {
  require(queries_per_id >= 1, "make_split: queries_per_id must be >= 1");
  std::map<std::size_t, std::size_t> seen;
  std::map<std::size_t, std::size_t> totals;
  for (const auto& s : ds.samples) ++totals[s.identity];
  for (const auto& [id, n] : totals) {
    if (n <= queries_per_id) {
      throw ContractError("identity " + std::to_string(id) + " has " + std::to_string(n) +
                          " samples; a split needs more than " +
                          std::to_string(queries_per_id));
    }
  }
  RetrievalSplit split;
  for (const auto& s : ds.samples) {
    if (seen[s.identity]++ < queries_per_id) {
      split.query.push_back(s);
    } else {
      split.gallery.push_back(s);
    }
  }
  return split;
}

std::vector<double> distance_matrix(const Tensor& query, const Tensor& gallery) {
  if (query.cols() != gallery.cols()) {
    throw DimensionError("query and gallery embeddings differ in width");
  }
  const std::size_t nq = query.rows(), ng = gallery.rows(), dim = query.cols();
  std::vector<double> d(nq * ng);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < ng; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = query.at(i, k) - gallery.at(j, k);
        s += diff * diff;
      }
      d[i * ng + j] = std::sqrt(s);
    }
  return d;
}

RetrievalResult rank_distances(std::span<const double> dist, std::size_t num_query,
                               std::span<const std::size_t> query_ids,
                               std::span<const std::size_t> gallery_ids) {
  const std::size_t ng = gallery_ids.size();
  if (query_ids.size() != num_query || dist.size() != num_query * ng) {
    throw DimensionError("distance matrix does not match query/gallery sizes");
  }
  if (num_query == 0 || ng == 0) throw ContractError("empty query or gallery");
  const std::set<std::size_t> gallery_set(gallery_ids.begin(), gallery_ids.end());
  for (std::size_t id : query_ids) {
    if (!gallery_set.count(id)) {
      throw ProtocolError("query identity " + std::to_string(id) + " is absent from the gallery");
    }
  }

  RetrievalResult r;
  r.cmc.assign(ng, 0.0);
  std::vector<std::size_t> hits(ng, 0);
  std::vector<std::size_t> order(ng);
  for (std::size_t q = 0; q < num_query; ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double* row = dist.data() + q * ng;
    std::stable_sort(order.begin(), order.end(),
                     [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    std::size_t found = 0;
    double precision_sum = 0.0;
    std::size_t first_hit = ng;
    for (std::size_t rank = 0; rank < ng; ++rank) {
      if (gallery_ids[order[rank]] != query_ids[q]) continue;
      ++found;
      precision_sum += static_cast<double>(found) / static_cast<double>(rank + 1);
      if (first_hit == ng) first_hit = rank;
    }
    r.average_precision.push_back(precision_sum / static_cast<double>(found));
    ++hits[first_hit];
  }
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < ng; ++k) {
    cumulative += hits[k];
    r.cmc[k] = static_cast<double>(cumulative) / static_cast<double>(num_query);
  }
  double sum = 0.0;
  for (double ap : r.average_precision) sum += ap;
  r.map = sum / static_cast<double>(num_query);
  return r;
}

RetrievalResult compute_map_cmc(const Tensor& query, std::span<const std::size_t> query_ids,
                                const Tensor& gallery, std::span<const std::size_t> gallery_ids) {
  if (query.rows() != query_ids.size() || gallery.rows() != gallery_ids.size()) {
    throw DimensionError("embedding rows do not match identity lists");
  }
  const auto d = distance_matrix(query, gallery);
  return rank_distances(d, query.rows(), query_ids, gallery_ids);
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> ids_of(const std::vector<Sample>& s) {
  std::vector<std::size_t> out;
  for (const auto& x : s) out.push_back(x.identity);
  return out;
}

struct Batched {
  std::vector<Tensor> inputs;
  std::size_t rows = 0;
};

Batched chunk(const std::vector<Sample>& samples, std::size_t batch_size) {
  Batched b;
  b.rows = samples.size();
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const Sample*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&samples[i]);
    b.inputs.push_back(make_batch(ptrs, samples[start].x.size()).x);
  }
  return b;
}

Tensor embed_all(const EmbedNet& net, const Batched& b, const BnMode& mode) {
  const std::size_t dim = net.spec().embed_dim;
  Tensor out(Shape{b.rows, dim});
  std::size_t row = 0;
  for (const auto& x : b.inputs) {
    Tensor e = net.embed(x, mode);
    std::copy(e.values().begin(), e.values().end(), out.values().begin() + row * dim);
    row += x.rows();
  }
  return out;
}

void check_split(const RetrievalSplit& split, const EvalOptions& opt) {
  if (split.query.empty() || split.gallery.empty()) {
    throw ContractError("evaluation split needs queries and gallery");
  }
  require(opt.batch_size >= 1, "evaluation batch size must be >= 1");
}

}  // namespace

RetrievalResult eval_path(const EmbedNet& net, const BnPath& path, const RetrievalSplit& split,
                          const EvalOptions& opt) {
  check_split(split, opt);
  path.validate(net.bn_widths());
  const auto q = chunk(split.query, opt.batch_size);
  const auto g = chunk(split.gallery, opt.batch_size);
  const std::uint64_t before = net.forward_count();
  const auto t0 = Clock::now();
  Tensor qe = embed_all(net, q, bn_mode::Path{&path});
  Tensor ge = embed_all(net, g, bn_mode::Path{&path});
  const auto d = distance_matrix(qe, ge);
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  RetrievalResult r = rank_distances(d, qe.rows(), ids_of(split.query), ids_of(split.gallery));
  r.batches = q.inputs.size() + g.inputs.size();
  r.forward_passes = net.forward_count() - before;
  r.seconds_per_batch = elapsed / static_cast<double>(r.batches);
  return r;
}

RetrievalResult eval_mean_path(const EmbedNet& net, const GpEstimate& gp,
                               const RetrievalSplit& split, const EvalOptions& opt) {
  return eval_path(net, mean_path(gp), split, opt);
}

RetrievalResult eval_single_path(const EmbedNet& net, std::size_t domain,
                                 const RetrievalSplit& split, const EvalOptions& opt) {
  return eval_path(net, net.domain_path(domain), split, opt);
}

void EnsembleSpec::validate() const {
  if (paths.empty()) throw ContractError("ensemble needs at least one path");
  if (weights.size() != paths.size()) {
    throw ContractError("ensemble has " + std::to_string(paths.size()) + " paths but " +
                        std::to_string(weights.size()) + " weights");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("ensemble weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ContractError("ensemble weights must sum to 1");
}

EnsembleSpec EnsembleSpec::uniform(const EmbedNet& net) {
  EnsembleSpec spec;
  const std::size_t k = net.num_domains();
  for (std::size_t d = 0; d < k; ++d) {
    spec.paths.push_back(net.domain_path(d));
    spec.weights.push_back(1.0 / static_cast<double>(k));
  }
  return spec;
}

RetrievalResult eval_ensemble(const EmbedNet& net, const EnsembleSpec& spec,
                              const RetrievalSplit& split, const EvalOptions& opt,
                              Fusion fusion) {
  spec.validate();
  check_split(split, opt);
  for (const auto& p : spec.paths) p.validate(net.bn_widths());
  const auto q = chunk(split.query, opt.batch_size);
  const auto g = chunk(split.gallery, opt.batch_size);
  const std::uint64_t before = net.forward_count();
  const auto t0 = Clock::now();
  std::vector<double> fused;
  Tensor qsum, gsum;
  for (std::size_t k = 0; k < spec.paths.size(); ++k) {
    const BnMode mode = bn_mode::Path{&spec.paths[k]};
    Tensor qe = embed_all(net, q, mode);
    Tensor ge = embed_all(net, g, mode);
    const double w = spec.weights[k];
    if (fusion == Fusion::Distance) {
      const auto d = distance_matrix(qe, ge);
      if (fused.empty()) fused.assign(d.size(), 0.0);
      for (std::size_t i = 0; i < d.size(); ++i) fused[i] += w * d[i];
    } else {
      if (k == 0) {
        qsum = Tensor(qe.shape());
        gsum = Tensor(ge.shape());
      }
      for (std::size_t i = 0; i < qe.size(); ++i) qsum[i] += w * qe[i];
      for (std::size_t i = 0; i < ge.size(); ++i) gsum[i] += w * ge[i];
    }
  }
  if (fusion == Fusion::Embedding) fused = distance_matrix(qsum, gsum);
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  RetrievalResult r =
      rank_distances(fused, split.query.size(), ids_of(split.query), ids_of(split.gallery));
  r.batches = q.inputs.size() + g.inputs.size();
  r.forward_passes = net.forward_count() - before;
  r.seconds_per_batch = elapsed / static_cast<double>(r.batches);
  return r;
}

std::vector<SpreadRow> path_spread(const EmbedNet& net, const RetrievalSplit& split,
                                   std::span<const double> lambdas, std::size_t paths,
                                   std::uint64_t seed, NoiseScale scale,
                                   const EvalOptions& opt) {
  require(paths >= 1, "path_spread needs at least one path per lambda");
  const GpEstimate gp = estimate_gp(net);
  const double mean_map = eval_path(net, mean_path(gp), split, opt).map;
  std::vector<SpreadRow> rows;
  for (double lambda : lambdas) {
    Rng rng(seed);
    SpreadRow row;
    row.lambda = lambda;
    row.paths = paths;
    row.mean_path_map = mean_map;
    row.min_map = 1.0;
    row.max_map = 0.0;
    std::vector<double> maps;
    for (std::size_t i = 0; i < paths; ++i) {
      const double m = eval_path(net, sample_path(gp, lambda, rng, scale), split, opt).map;
      row.min_map = std::min(row.min_map, m);
      row.max_map = std::max(row.max_map, m);
      maps.push_back(m);
    }
    // Offsets from the minimum, so equal scores average to exactly that score.
    double offset = 0.0;
    for (double m : maps) offset += m - row.min_map;
    row.mean_map = row.min_map + offset / static_cast<double>(paths);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SweepRow> sweep_lambda(std::span<const double> grid,
                                   std::span<const DomainDataset> sources,
                                   const RetrievalSplit& eval_split, const NetSpec& spec,
                                   const TrainConfig& base, std::size_t spread_paths,
                                   const EvalOptions& opt) {
  if (grid.empty()) throw ContractError("lambda grid is empty");
  std::vector<SweepRow> rows;
  for (double lambda : grid) {
    TrainConfig cfg = base;
    cfg.lambda = lambda;
    EmbedNet net(spec, cfg.seed);
    train(net, sources, cfg);
    SweepRow row;
    row.lambda = lambda;
    row.mean_path = eval_mean_path(net, estimate_gp(net), eval_split, opt);
    const double one[] = {lambda};
    row.spread = path_spread(net, eval_split, one, spread_paths, mix_seed(cfg.seed, 0x737072ULL),
                             cfg.noise_scale, opt)[0];
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gdnorm
