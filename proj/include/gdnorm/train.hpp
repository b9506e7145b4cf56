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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gdnorm/datagen.hpp"
#include "gdnorm/gp.hpp"
#include "gdnorm/model.hpp"

namespace gdnorm {

struct TrainConfig {
  double lambda = 0.6;
  double lr = 3.5e-4;
  // lr is multiplied by lr_decay_factor from epoch lr_decay_epoch on
  // (0-based).
  std::size_t lr_decay_epoch = 40;
  double lr_decay_factor = 0.1;
  double weight_decay = 5e-4;
  std::size_t epochs = 60;
  // Supervised iterations per epoch; 0 derives it from the largest domain.
  std::size_t iters_per_epoch = 0;
  std::size_t batch_ids = 4;        // P
  std::size_t batch_instances = 4;  // Q
  // Refine batch size; 0 means K * P * Q.
  std::size_t mixed_batch = 0;
  double margin = 0.3;
  double id_weight = 1.0;
  double triplet_weight = 1.0;
  std::size_t n_paths = 1;
  NoiseScale noise_scale = NoiseScale::Variance;
  bool refine = true;
  std::uint64_t seed = 0;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss_id = 0.0;
  double loss_triplet = 0.0;
  double loss_refine = 0.0;
  double lr = 0.0;

  std::string to_json() const;
  bool operator==(const EpochRecord&) const = default;
};

// Maps global identity ids onto contiguous classifier rows.
class ClassIndex {
 public:
  ClassIndex() = default;
  explicit ClassIndex(std::span<const DomainDataset> datasets);
  std::size_t size() const noexcept { return index_.size(); }
  std::size_t at(std::size_t identity) const;
  std::vector<std::size_t> labels(std::span<const std::size_t> identities) const;

 private:
  std::map<std::size_t, std::size_t> index_;
};

struct StepLosses {
  double id = 0.0;
  double triplet = 0.0;
  double total() const { return id + triplet; }
};

// One supervised update over single-domain batches (one per participating
// domain) with batch-statistic normalization. The objective is the mean of
// the per-batch losses; each normalization slot's gamma/beta move with the
// gradient of its own batches at full rate. Each touched slot's population
// statistics are then updated once with the mean of its batch moments.
// A tied model normalizes the concatenation of all batches as one batch.
StepLosses supervised_step(EmbedNet& net, std::span<const Batch> batches,
                           const ClassIndex& classes, const TrainConfig& cfg,
                           double lr);

// Self-refining update: re-estimate the process from the current slots,
// sample cfg.n_paths paths, run the mixed batch through each, and
// backpropagate the mean loss through sampling and estimation into every
// slot's gamma/beta and the shared weights.
StepLosses refine_step(EmbedNet& net, const Batch& mixed, const ClassIndex& classes,
                       const TrainConfig& cfg, Rng& rng, double lr);

// Loss of the refine objective without updating anything; used for gradient
// checks. Consumes the RNG like refine_step.
Var refine_loss(Tape& tape, EmbedNet& net, const Batch& mixed,
                const ClassIndex& classes, const TrainConfig& cfg, Rng& rng);
Var supervised_loss(Tape& tape, EmbedNet& net, std::span<const Batch> batches,
                    const ClassIndex& classes, const TrainConfig& cfg,
                    StepLosses* parts = nullptr);

NetSpec net_spec_for(std::span<const DomainDataset> datasets, std::size_t input_dim,
                     std::vector<std::size_t> hidden, std::size_t embed_dim,
                     bool tied_bn, double eps, double momentum);

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Alternating schedule: per iteration one supervised step over a P x Q batch
// from every domain, then (if cfg.refine) one refine step on a mixed batch.
TrainResult train(EmbedNet& net, std::span<const DomainDataset> datasets,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace gdnorm
