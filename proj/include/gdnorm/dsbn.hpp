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

#include <cstddef>
#include <utility>
#include <vector>

#include "gdnorm/autodiff.hpp"
#include "gdnorm/tensor.hpp"

namespace gdnorm {

// Per-channel affine coefficients of one normalization layer in eval form:
// y = a * x + b.
struct AffineCoeffs {
  Tensor a;
  Tensor b;
};

// Domain-specific batch normalization: one (gamma, beta, running mean,
// running var) set per slot, all of width `channels`. Slots are normally one
// per source domain; a model with tied normalization uses a single slot.
class DsbnLayer {
 public:
  DsbnLayer(std::size_t slots, std::size_t channels, double eps = 1e-5,
            double momentum = 0.9);

  std::size_t slots() const noexcept { return gamma_.size(); }
  std::size_t channels() const noexcept { return channels_; }
  double eps() const noexcept { return eps_; }
  double momentum() const noexcept { return momentum_; }

  Tensor& gamma(std::size_t slot);
  Tensor& beta(std::size_t slot);
  const Tensor& gamma(std::size_t slot) const;
  const Tensor& beta(std::size_t slot) const;
  const Tensor& running_mean(std::size_t slot) const;
  const Tensor& running_var(std::size_t slot) const;
  // Overwrites population statistics, e.g. when loading a checkpoint.
  void set_running_stats(std::size_t slot, Tensor mean, Tensor var);

  // Batch-statistic normalization with slot's gamma/beta. Pure: population
  // statistics are not touched; pass the returned batch moments to
  // update_running_stats() to commit them.
  Tape::BatchNormResult forward_train(Tape& tape, Var x, std::size_t slot);

  // running <- m * running + (1 - m) * batch
  void update_running_stats(std::size_t slot, const Tensor& batch_mean,
                            const Tensor& batch_var);

  // a = gamma / sqrt(var + eps), b = beta - gamma * mean / sqrt(var + eps),
  // computed from population statistics.
  AffineCoeffs linearize(std::size_t slot) const;
  // Same coefficients recorded on a tape, differentiable in gamma and beta.
  // Population statistics enter as constants.
  std::pair<Var, Var> linearize(Tape& tape, std::size_t slot);

  // Eval-mode normalization computed directly from population statistics,
  // without going through the affine form.
  Tensor eval_direct(const Tensor& x, std::size_t slot) const;

  std::vector<Tensor*> params(std::size_t slot);

 private:
  void check_slot(std::size_t slot) const;

  std::size_t channels_;
  double eps_;
  double momentum_;
  std::vector<Tensor> gamma_, beta_, mean_, var_;
};

// Train-mode forward that also commits the batch moments to population
// statistics.
Var bn_forward_train(DsbnLayer& layer, Tape& tape, Var x, std::size_t slot);

// y = a * x + b per channel.
Var bn_forward_affine(Tape& tape, Var x, Var a, Var b);

}  // namespace gdnorm
