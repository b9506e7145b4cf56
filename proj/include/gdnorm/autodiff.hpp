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
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gdnorm/tensor.hpp"

namespace gdnorm {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const noexcept {
    return id != std::numeric_limits<std::size_t>::max();
  }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node
// list is already a topological order and backward() walks it in reverse.
//
// Trainable tensors enter through param(); backward() adds each one's
// adjoint into its gradient slot, so gradients from several tapes sum until
// the optimizer clears them. A tape can be backpropagated once; a second
// call raises ContractError.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Tensor& p);
  const Tensor& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // y = x W + bias, x: B x Cin, W: Cin x Cout, bias: Cout.
  Var linear(Var x, Var w, std::optional<Var> bias = std::nullopt);
  Var relu(Var x);

  struct BatchNormResult {
    Var y;
    Tensor batch_mean;
    Tensor batch_var;
  };
  // Train-mode normalization with the biased (divide-by-B) batch variance.
  BatchNormResult batch_norm(Var x, Var gamma, Var beta, double eps);
  // y[b, c] = a[c] * x[b, c] + b[c].
  Var affine(Var x, Var a, Var b);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var mul_const(Var a, const Tensor& c);
  Var square(Var a);
  // Derivative at 0 is taken as 0.
  Var sqrt(Var a);
  // Elementwise mean of equally shaped values.
  Var mean(std::span<const Var> xs);
  Var sum(Var x);

  // Mean softmax cross-entropy of B x N logits.
  Var cross_entropy(Var logits, std::span<const std::size_t> labels);
  // Batch-hard triplet loss with Euclidean distances.
  Var batch_hard_triplet(Var embeddings, std::span<const std::size_t> labels,
                         double margin);

  void backward(Var loss);
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> adj;
    Tensor* param = nullptr;
    std::function<void(Tape&, const Node&)> back;
  };

  Var push(Tensor value, std::function<void(Tape&, const Node&)> back);
  Node& node(Var v);
  std::vector<double>& adj(Var v);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace gdnorm
