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

#include "gdnorm/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gdnorm/errors.hpp"

namespace gdnorm::oracle {

std::vector<double> central_differences(Tensor& t, const std::function<double()>& f,
                                        double step) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t[i];
    t[i] = orig + step;
    const double up = f();
    t[i] = orig - step;
    const double down = f();
    t[i] = orig;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

void mean_and_variance(std::span<const Tensor> xs, Tensor& mean, Tensor& var) {
  require(!xs.empty(), "mean_and_variance of nothing");
  const std::size_t n = xs[0].size();
  mean = Tensor(xs[0].shape());
  var = Tensor(xs[0].shape());
  for (std::size_t i = 0; i < n; ++i) {
    long double s = 0.0L;
    for (const auto& x : xs) s += x[i];
    const long double m = s / static_cast<long double>(xs.size());
    long double ss = 0.0L;
    for (const auto& x : xs) ss += (x[i] - m) * (x[i] - m);
    mean[i] = static_cast<double>(m);
    var[i] = static_cast<double>(ss / static_cast<long double>(xs.size()));
  }
}

double average_precision(std::span<const int> relevance) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < relevance.size(); ++r) {
    if (!relevance[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

Retrieval brute_force_retrieval(std::span<const double> dist, std::size_t num_query,
                                std::span<const std::size_t> query_ids,
                                std::span<const std::size_t> gallery_ids) {
  const std::size_t ng = gallery_ids.size();
  Retrieval out;
  out.cmc.assign(ng, 0.0);
  std::vector<std::size_t> first_hits(ng, 0);
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < num_query; ++q) {
    const double* row = dist.data() + q * ng;
    // position of each gallery item in the ranking
    std::vector<int> relevance(ng, 0);
    for (std::size_t j = 0; j < ng; ++j) {
      std::size_t pos = 0;
      for (std::size_t i = 0; i < ng; ++i) {
        if (row[i] < row[j] || (row[i] == row[j] && i < j)) ++pos;
      }
      relevance[pos] = gallery_ids[j] == query_ids[q] ? 1 : 0;
    }
    ap_sum += average_precision(relevance);
    const auto first = std::find(relevance.begin(), relevance.end(), 1) - relevance.begin();
    ++first_hits[static_cast<std::size_t>(first)];
  }
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < ng; ++k) {
    cumulative += first_hits[k];
    out.cmc[k] = static_cast<double>(cumulative) / static_cast<double>(num_query);
  }
  out.map = ap_sum / static_cast<double>(num_query);
  return out;
}

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t b = logits.rows(), n = logits.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, logits.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += std::exp(logits.at(r, c) - mx);
    total += mx + std::log(s) - logits.at(r, labels[r]);
  }
  return total / static_cast<double>(b);
}

double batch_hard_triplet(const Tensor& embeddings, std::span<const std::size_t> labels,
                          double margin) {
  const std::size_t b = embeddings.rows(), d = embeddings.cols();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double t = embeddings.at(i, k) - embeddings.at(j, k);
      s += t * t;
    }
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    double pos = -1.0, neg = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      const double dj = dist(a, j);
      if (labels[j] == labels[a]) {
        pos = std::max(pos, dj);
      } else {
        neg = std::min(neg, dj);
      }
    }
    total += std::max(0.0, pos - neg + margin);
  }
  return total / static_cast<double>(b);
}

}  // namespace gdnorm::oracle
