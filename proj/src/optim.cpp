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

#include "gdnorm/optim.hpp"

#include <string>

#include "gdnorm/errors.hpp"

namespace gdnorm {

namespace {

void check_hyper(double lr, double weight_decay) {
  if (!(lr > 0.0)) throw ContractError("sgd: learning rate must be > 0");
  if (!(weight_decay >= 0.0)) {
    throw ContractError("sgd: weight decay must be >= 0");
  }
}

void check_ready(const Tensor* p) {
  if (!p->trainable()) throw ContractError("sgd: parameter is not trainable");
  if (!p->has_grad()) {
    throw ContractError("sgd: trainable parameter " + shape_str(p->shape()) +
                        " has no gradient");
  }
}

void apply(Tensor* p, double lr, double weight_decay, double grad_scale = 1.0) {
  auto values = p->values();
  auto grad = p->grad();
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] -= lr * (grad_scale * grad[i] + weight_decay * values[i]);
  }
  p->clear_grad();
}

}  // namespace

void sgd_step(std::span<Tensor* const> params, double lr, double weight_decay) {
  check_hyper(lr, weight_decay);
  for (Tensor* p : params) check_ready(p);
  for (Tensor* p : params) apply(p, lr, weight_decay);
}

void sgd_step(std::span<const ParamGroup> groups, double lr, double weight_decay) {
  check_hyper(lr, weight_decay);
  for (const auto& g : groups) {
    if (!(g.grad_scale > 0.0)) throw ContractError("sgd: grad_scale must be > 0");
    for (Tensor* p : g.params) check_ready(p);
  }
  for (const auto& g : groups)
    for (Tensor* p : g.params) apply(p, lr, weight_decay, g.grad_scale);
}

}  // namespace gdnorm
