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

#include "gdnorm/dsbn.hpp"

#include <cmath>
#include <string>

#include "gdnorm/errors.hpp"

namespace gdnorm {

DsbnLayer::DsbnLayer(std::size_t slots, std::size_t channels, double eps,
                     double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  require(slots >= 1, "DsbnLayer needs at least one slot");
  require(channels >= 1, "DsbnLayer needs at least one channel");
  require(eps > 0.0, "DsbnLayer eps must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "DsbnLayer momentum must be in [0, 1)");
  for (std::size_t s = 0; s < slots; ++s) {
    gamma_.emplace_back(Shape{channels}, 1.0);
    beta_.emplace_back(Shape{channels}, 0.0);
    mean_.emplace_back(Shape{channels}, 0.0);
    var_.emplace_back(Shape{channels}, 1.0);
    gamma_.back().set_trainable(true);
    beta_.back().set_trainable(true);
  }
}

void DsbnLayer::check_slot(std::size_t slot) const {
  if (slot >= gamma_.size()) {
    throw IndexError("normalization slot " + std::to_string(slot) +
                     " out of range for " + std::to_string(gamma_.size()) +
                     " slots");
  }
}

Tensor& DsbnLayer::gamma(std::size_t slot) { check_slot(slot); return gamma_[slot]; }
Tensor& DsbnLayer::beta(std::size_t slot) { check_slot(slot); return beta_[slot]; }
const Tensor& DsbnLayer::gamma(std::size_t slot) const { check_slot(slot); return gamma_[slot]; }
const Tensor& DsbnLayer::beta(std::size_t slot) const { check_slot(slot); return beta_[slot]; }
const Tensor& DsbnLayer::running_mean(std::size_t slot) const { check_slot(slot); return mean_[slot]; }
const Tensor& DsbnLayer::running_var(std::size_t slot) const { check_slot(slot); return var_[slot]; }

void DsbnLayer::set_running_stats(std::size_t slot, Tensor mean, Tensor var) {
  check_slot(slot);
  if (mean.shape() != Shape{channels_} || var.shape() != Shape{channels_}) {
    throw DimensionError("running stats width mismatch");
  }
  for (double v : var.values()) {
    if (!(v >= 0.0)) throw NumericError("running variance must be >= 0");
  }
  mean_[slot] = std::move(mean);
  var_[slot] = std::move(var);
}

Tape::BatchNormResult DsbnLayer::forward_train(Tape& tape, Var x, std::size_t slot) {
  check_slot(slot);
  return tape.batch_norm(x, tape.param(gamma_[slot]), tape.param(beta_[slot]), eps_);
}

void DsbnLayer::update_running_stats(std::size_t slot, const Tensor& batch_mean,
                                     const Tensor& batch_var) {
  check_slot(slot);
  if (batch_mean.size() != channels_ || batch_var.size() != channels_) {
    throw DimensionError("batch statistics width mismatch");
  }
  const double m = momentum_;
  for (std::size_t c = 0; c < channels_; ++c) {
    if (!(batch_var[c] >= 0.0)) throw NumericError("batch variance must be >= 0");
    mean_[slot][c] = m * mean_[slot][c] + (1.0 - m) * batch_mean[c];
    var_[slot][c] = m * var_[slot][c] + (1.0 - m) * batch_var[c];
  }
}

AffineCoeffs DsbnLayer::linearize(std::size_t slot) const {
  check_slot(slot);
  AffineCoeffs out{Tensor(Shape{channels_}), Tensor(Shape{channels_})};
  for (std::size_t c = 0; c < channels_; ++c) {
    const double inv = 1.0 / std::sqrt(var_[slot][c] + eps_);
    out.a[c] = gamma_[slot][c] * inv;
    out.b[c] = beta_[slot][c] - gamma_[slot][c] * (mean_[slot][c] * inv);
  }
  return out;
}

std::pair<Var, Var> DsbnLayer::linearize(Tape& tape, std::size_t slot) {
  check_slot(slot);
  Tensor inv(Shape{channels_}), mean_inv(Shape{channels_});
  for (std::size_t c = 0; c < channels_; ++c) {
    inv[c] = 1.0 / std::sqrt(var_[slot][c] + eps_);
    mean_inv[c] = mean_[slot][c] * inv[c];
  }
  Var g = tape.param(gamma_[slot]);
  Var b = tape.param(beta_[slot]);
  Var a = tape.mul_const(g, inv);
  Var shift = tape.sub(b, tape.mul_const(g, mean_inv));
  return {a, shift};
}

Tensor DsbnLayer::eval_direct(const Tensor& x, std::size_t slot) const {
  check_slot(slot);
  if (x.cols() != channels_) throw DimensionError("eval_direct width mismatch");
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < channels_; ++c) {
      y.at(r, c) = gamma_[slot][c] * (x.at(r, c) - mean_[slot][c]) /
                       std::sqrt(var_[slot][c] + eps_) +
                   beta_[slot][c];
    }
  return y;
}

std::vector<Tensor*> DsbnLayer::params(std::size_t slot) {
  check_slot(slot);
  return {&gamma_[slot], &beta_[slot]};
}

Var bn_forward_train(DsbnLayer& layer, Tape& tape, Var x, std::size_t slot) {
  auto r = layer.forward_train(tape, x, slot);
  layer.update_running_stats(slot, r.batch_mean, r.batch_var);
  return r.y;
}

Var bn_forward_affine(Tape& tape, Var x, Var a, Var b) { return tape.affine(x, a, b); }

}  // namespace gdnorm
