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

#include <atomic>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gdnorm/autodiff.hpp"
#include "gdnorm/dsbn.hpp"
#include "gdnorm/gp.hpp"

namespace gdnorm {

struct NetSpec {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t embed_dim = 32;
  std::size_t num_domains = 3;
  std::size_t num_classes = 96;
  // Single normalization slot shared by every domain (the shared-BN baseline).
  bool tied_bn = false;
  double eps = 1e-5;
  double momentum = 0.9;

  // Widths of the normalization layers: hidden..., embed_dim.
  std::vector<std::size_t> bn_widths() const;
  void validate() const;
};

namespace bn_mode {
// Batch statistics of the batch, domain k's gamma/beta.
struct TrainDomain { std::size_t domain; };
// Population statistics of domain k, via its linearized coefficients.
struct Domain { std::size_t domain; };
// Fixed affine coefficients for every layer.
struct Path { const BnPath* path; };
}  // namespace bn_mode

using BnMode = std::variant<bn_mode::TrainDomain, bn_mode::Domain, bn_mode::Path>;

// MLP embedding network: each linear layer is followed by a domain-specific
// normalization layer, with ReLU between hidden layers. The last linear +
// normalization pair is the embedding bottleneck; its output is the
// embedding. A bias-free union classifier sits on top.
class EmbedNet {
 public:
  EmbedNet(NetSpec spec, std::uint64_t seed);
  EmbedNet(const EmbedNet& other);
  EmbedNet& operator=(const EmbedNet& other);

  const NetSpec& spec() const noexcept { return spec_; }
  std::size_t num_domains() const noexcept { return spec_.num_domains; }
  std::size_t num_bn_layers() const noexcept { return bn_.size(); }
  std::size_t num_slots() const noexcept { return spec_.tied_bn ? 1 : spec_.num_domains; }
  std::size_t slot_of(std::size_t domain) const;
  std::vector<std::size_t> bn_widths() const { return spec_.bn_widths(); }

  Tensor& weight(std::size_t layer) { return weights_.at(layer); }
  const Tensor& weight(std::size_t layer) const { return weights_.at(layer); }
  Tensor& classifier() { return classifier_; }
  const Tensor& classifier() const { return classifier_; }
  DsbnLayer& bn(std::size_t layer) { return bn_.at(layer); }
  const DsbnLayer& bn(std::size_t layer) const { return bn_.at(layer); }

  struct Forward {
    Var embeddings;
    // Per layer batch moments; filled in TrainDomain mode only.
    std::vector<Tensor> batch_mean, batch_var;
  };
  // Records a forward pass with trainable parameters on the tape.
  Forward forward(Tape& tape, Var x, const BnMode& mode);
  // Forward with tape-valued coefficients (refine step).
  Var forward(Tape& tape, Var x, const PathVars& path);
  // Inference: embeddings only, parameters enter as constants.
  Tensor embed(const Tensor& x, const BnMode& mode) const;
  Var logits(Tape& tape, Var embeddings);

  BnPath domain_path(std::size_t domain) const;
  PathVars domain_path(Tape& tape, std::size_t domain);
  // One path per normalization slot.
  std::vector<BnPath> slot_paths() const;

  std::vector<Tensor*> shared_params();
  std::vector<Tensor*> slot_params(std::size_t slot);

  std::uint64_t forward_count() const noexcept { return forwards_.load(); }
  void reset_forward_count() noexcept { forwards_.store(0); }

  // Stable names for every tensor, in checkpoint order.
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  // Overwrites the values of a named tensor; shapes must match.
  void set_tensor(const std::string& name, const Tensor& value);
  bool same_parameters(const EmbedNet& other) const;

 private:
  Forward forward_impl(Tape& tape, Var x, const BnMode& mode, bool trainable);

  NetSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<DsbnLayer> bn_;
  Tensor classifier_;
  mutable std::atomic<std::uint64_t> forwards_{0};
};

// Estimate over the model's normalization slots; a tied model yields a
// zero-variance estimate.
GpEstimate estimate_gp(const EmbedNet& net);

// Softmax cross-entropy over the union classifier, batch mean.
Var identity_loss(Tape& tape, EmbedNet& net, Var embeddings,
                  std::span<const std::size_t> labels);
Var triplet_loss(Tape& tape, Var embeddings, std::span<const std::size_t> labels,
                 double margin);

}  // namespace gdnorm
