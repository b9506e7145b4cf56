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

#include <span>
#include <vector>

#include "gdnorm/tensor.hpp"

namespace gdnorm {

struct ParamGroup {
  std::vector<Tensor*> params;
  // Multiplier on the gradient (not on weight decay) for this group.
  double grad_scale = 1.0;
};

// Plain SGD with L2 weight decay:
//   p <- p - lr * (grad + weight_decay * p)
// Gradients are cleared after the update. A trainable parameter with no
// gradient is a contract error. With groups, grad is scaled by grad_scale.
void sgd_step(std::span<Tensor* const> params, double lr, double weight_decay);
void sgd_step(std::span<const ParamGroup> groups, double lr, double weight_decay);

}  // namespace gdnorm
