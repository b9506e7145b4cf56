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

// Reference computations that share no code path with the library routines
// they check. Used by the test suites and by `repro`.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gdnorm/tensor.hpp"

namespace gdnorm::oracle {

// Central differences of f with respect to every entry of t. f must read t
// afresh on every call; t is restored afterwards.
std::vector<double> central_differences(Tensor& t, const std::function<double()>& f,
                                        double step = 1e-5);

// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-6);

// Entrywise mean and divide-by-n variance, two-pass.
void mean_and_variance(std::span<const Tensor> xs, Tensor& mean, Tensor& var);

// Average precision of a ranked relevance list (1 = relevant).
double average_precision(std::span<const int> relevance);

struct Retrieval {
  double map = 0.0;
  std::vector<double> cmc;
};

// Rank of every gallery item computed by counting, no sorting: items
// strictly closer plus equally close items with a lower index.
Retrieval brute_force_retrieval(std::span<const double> dist, std::size_t num_query,
                                std::span<const std::size_t> query_ids,
                                std::span<const std::size_t> gallery_ids);

// Mean softmax cross-entropy via log-sum-exp.
double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Batch-hard triplet loss by enumerating every ordered pair.
double batch_hard_triplet(const Tensor& embeddings, std::span<const std::size_t> labels,
                          double margin);

}  // namespace gdnorm::oracle
