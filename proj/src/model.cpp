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

#include "gdnorm/model.hpp"

#include <algorithm>
#include <cmath>

#include "gdnorm/errors.hpp"
#include "gdnorm/rng.hpp"

namespace gdnorm {

std::vector<std::size_t> NetSpec::bn_widths() const {
  std::vector<std::size_t> w(hidden);
  w.push_back(embed_dim);
  return w;
}

void NetSpec::validate() const {
  require(input_dim >= 1, "input_dim must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  for (std::size_t h : hidden) require(h >= 1, "hidden widths must be >= 1");
  require(num_domains >= 1, "num_domains must be >= 1");
  require(num_classes >= 2, "num_classes must be >= 2");
}

EmbedNet::EmbedNet(NetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(mix_seed(seed, 0x6e6574ULL));
  std::size_t in = spec_.input_dim;
  const std::size_t slots = num_slots();
  for (std::size_t width : spec_.bn_widths()) {
    // He initialization; no bias since every linear layer feeds a
    // normalization layer that absorbs it.
    Tensor w(Shape{in, width});
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (double& v : w.values()) v = sd * rng.normal();
    w.set_trainable(true);
    weights_.push_back(std::move(w));
    bn_.emplace_back(slots, width, spec_.eps, spec_.momentum);
    in = width;
  }
  classifier_ = Tensor(Shape{spec_.embed_dim, spec_.num_classes});
  const double sd = 1.0 / std::sqrt(static_cast<double>(spec_.embed_dim));
  for (double& v : classifier_.values()) v = sd * rng.normal();
  classifier_.set_trainable(true);
}

EmbedNet::EmbedNet(const EmbedNet& other)
    : spec_(other.spec_),
      weights_(other.weights_),
      bn_(other.bn_),
      classifier_(other.classifier_),
      forwards_(other.forwards_.load()) {}

EmbedNet& EmbedNet::operator=(const EmbedNet& other) {
  if (this != &other) {
    spec_ = other.spec_;
    weights_ = other.weights_;
    bn_ = other.bn_;
    classifier_ = other.classifier_;
    forwards_.store(other.forwards_.load());
  }
  return *this;
}

std::size_t EmbedNet::slot_of(std::size_t domain) const {
  if (domain >= spec_.num_domains) {
    throw IndexError("domain " + std::to_string(domain) + " out of range for " +
                     std::to_string(spec_.num_domains) + " domains");
  }
  return spec_.tied_bn ? 0 : domain;
}

EmbedNet::Forward EmbedNet::forward_impl(Tape& tape, Var x, const BnMode& mode,
                                         bool trainable) {
  if (tape.value(x).cols() != spec_.input_dim) {
    throw DimensionError("input width " + std::to_string(tape.value(x).cols()) +
                         " does not match model input " +
                         std::to_string(spec_.input_dim));
  }
  if (const auto* p = std::get_if<bn_mode::Path>(&mode)) {
    if (p->path == nullptr) throw ContractError("path mode without a path");
    p->path->validate(bn_widths());
  }
  ++forwards_;
  Forward out;
  Var h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Var w = trainable ? tape.param(weights_[l]) : tape.constant(weights_[l]);
    h = tape.linear(h, w);
    if (const auto* m = std::get_if<bn_mode::TrainDomain>(&mode)) {
      if (!trainable) throw ContractError("batch-statistic mode needs a training forward");
      auto r = bn_[l].forward_train(tape, h, slot_of(m->domain));
      h = r.y;
      out.batch_mean.push_back(std::move(r.batch_mean));
      out.batch_var.push_back(std::move(r.batch_var));
    } else if (const auto* m = std::get_if<bn_mode::Domain>(&mode)) {
      const std::size_t slot = slot_of(m->domain);
      if (trainable) {
        auto [a, b] = bn_[l].linearize(tape, slot);
        h = bn_forward_affine(tape, h, a, b);
      } else {
        AffineCoeffs c = bn_[l].linearize(slot);
        h = bn_forward_affine(tape, h, tape.constant(std::move(c.a)),
                              tape.constant(std::move(c.b)));
      }
    } else {
      const auto& c = std::get<bn_mode::Path>(mode).path->layers[l];
      h = bn_forward_affine(tape, h, tape.constant(c.a), tape.constant(c.b));
    }
    if (l + 1 < layers) h = tape.relu(h);
  }
  out.embeddings = h;
  return out;
}

EmbedNet::Forward EmbedNet::forward(Tape& tape, Var x, const BnMode& mode) {
  return forward_impl(tape, x, mode, true);
}

Var EmbedNet::forward(Tape& tape, Var x, const PathVars& path) {
  const auto widths = bn_widths();
  if (path.a.size() != widths.size() || path.b.size() != widths.size()) {
    throw DimensionError("path layer count does not match the model");
  }
  if (tape.value(x).cols() != spec_.input_dim) {
    throw DimensionError("input width does not match model input");
  }
  ++forwards_;
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.linear(h, tape.param(weights_[l]));
    h = bn_forward_affine(tape, h, path.a[l], path.b[l]);
    if (l + 1 < weights_.size()) h = tape.relu(h);
  }
  return h;
}

Tensor EmbedNet::embed(const Tensor& x, const BnMode& mode) const {
  Tape tape;
  // Constant binding never writes through the model.
  auto& self = const_cast<EmbedNet&>(*this);
  Var e = self.forward_impl(tape, tape.constant(x), mode, false).embeddings;
  return tape.value(e);
}

Var EmbedNet::logits(Tape& tape, Var embeddings) {
  return tape.linear(embeddings, tape.param(classifier_));
}

BnPath EmbedNet::domain_path(std::size_t domain) const {
  const std::size_t slot = slot_of(domain);
  BnPath p;
  for (const auto& layer : bn_) p.layers.push_back(layer.linearize(slot));
  return p;
}

PathVars EmbedNet::domain_path(Tape& tape, std::size_t domain) {
  const std::size_t slot = slot_of(domain);
  PathVars p;
  for (auto& layer : bn_) {
    auto [a, b] = layer.linearize(tape, slot);
    p.a.push_back(a);
    p.b.push_back(b);
  }
  return p;
}

std::vector<BnPath> EmbedNet::slot_paths() const {
  std::vector<BnPath> out;
  for (std::size_t s = 0; s < num_slots(); ++s) {
    BnPath p;
    for (const auto& layer : bn_) p.layers.push_back(layer.linearize(s));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Tensor*> EmbedNet::shared_params() {
  std::vector<Tensor*> out;
  for (auto& w : weights_) out.push_back(&w);
  out.push_back(&classifier_);
  return out;
}

std::vector<Tensor*> EmbedNet::slot_params(std::size_t slot) {
  std::vector<Tensor*> out;
  for (auto& layer : bn_) {
    for (Tensor* t : layer.params(slot)) out.push_back(t);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> EmbedNet::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back("linear/" + std::to_string(l) + "/weight", &weights_[l]);
  }
  for (std::size_t l = 0; l < bn_.size(); ++l) {
    for (std::size_t s = 0; s < bn_[l].slots(); ++s) {
      const std::string prefix = "bn/" + std::to_string(l) + "/" + std::to_string(s) + "/";
      out.emplace_back(prefix + "gamma", &bn_[l].gamma(s));
      out.emplace_back(prefix + "beta", &bn_[l].beta(s));
      out.emplace_back(prefix + "running_mean", &bn_[l].running_mean(s));
      out.emplace_back(prefix + "running_var", &bn_[l].running_var(s));
    }
  }
  out.emplace_back("classifier", &classifier_);
  return out;
}

void EmbedNet::set_tensor(const std::string& name, const Tensor& value) {
  for (const auto& [n, t] : named_tensors()) {
    if (n != name) continue;
    if (t->shape() != value.shape()) {
      throw DimensionError(name + ": expected " + shape_str(t->shape()) + ", got " +
                           shape_str(value.shape()));
    }
    if (!value.all_finite()) throw NumericError(name + " has non-finite values");
    if (name.ends_with("running_var")) {
      for (double v : value.values()) {
        if (v < 0.0) throw ContractError(name + " has negative entries");
      }
    }
    auto* dst = const_cast<Tensor*>(t);
    std::copy(value.values().begin(), value.values().end(), dst->values().begin());
    return;
  }
  throw IndexError("model has no tensor named " + name);
}

bool EmbedNet::same_parameters(const EmbedNet& other) const {
  auto a = named_tensors();
  auto b = other.named_tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || !a[i].second->same_values(*b[i].second)) {
      return false;
    }
  }
  return true;
}

GpEstimate estimate_gp(const EmbedNet& net) {
  return estimate_gp(net.slot_paths(), net.spec().tied_bn);
}

Var identity_loss(Tape& tape, EmbedNet& net, Var embeddings,
                  std::span<const std::size_t> labels) {
  return tape.cross_entropy(net.logits(tape, embeddings), labels);
}

Var triplet_loss(Tape& tape, Var embeddings, std::span<const std::size_t> labels,
                 double margin) {
  if (!(margin >= 0.0)) throw ContractError("triplet margin must be >= 0");
  return tape.batch_hard_triplet(embeddings, labels, margin);
}

}  // namespace gdnorm
