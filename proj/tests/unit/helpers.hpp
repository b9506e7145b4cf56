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

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "gdnorm/autodiff.hpp"
#include "gdnorm/datagen.hpp"
#include "gdnorm/model.hpp"
#include "gdnorm/oracles.hpp"
#include "gdnorm/rng.hpp"
#include "gdnorm/train.hpp"

namespace testutil {

using namespace gdnorm;

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline Tensor trainable(Tensor t) {
  t.set_trainable(true);
  return t;
}

// Backprop `loss` once, then compare every listed tensor's gradient with
// central differences. Returns the largest relative error.
inline double max_grad_error(const std::vector<Tensor*>& params,
                             const std::function<Var(Tape&)>& loss, double floor = 1e-6) {
  for (Tensor* p : params) p->clear_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor* p : params) {
    REQUIRE(p->has_grad());
    analytic.emplace_back(p->grad().begin(), p->grad().end());
    p->clear_grad();
  }
  auto value = [&] {
    Tape tape;
    return tape.value(loss(tape)).item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto fd = oracle::central_differences(*params[i], value);
    for (std::size_t j = 0; j < fd.size(); ++j) {
      worst = std::max(worst, oracle::relative_error(analytic[i][j], fd[j], floor));
    }
  }
  return worst;
}

// A dataset with `ids` identities of `per_id` Gaussian samples, identity ids
// starting at `first_id`.
inline DomainDataset toy_domain(std::size_t domain, std::size_t ids, std::size_t per_id,
                                std::size_t dim, std::size_t first_id, Rng& rng,
                                double offset = 0.0) {
  DomainDataset ds;
  ds.domain_id = domain;
  ds.dim = dim;
  ds.sampling_seed = mix_seed(domain, 77);
  for (std::size_t id = 0; id < ids; ++id) {
    std::vector<double> proto(dim);
    for (double& v : proto) v = rng.normal();
    for (std::size_t i = 0; i < per_id; ++i) {
      Sample s;
      s.identity = first_id + id;
      s.domain = domain;
      for (std::size_t j = 0; j < dim; ++j) s.x.push_back(proto[j] + 0.3 * rng.normal() + offset);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

inline Batch whole(const DomainDataset& ds) {
  std::vector<const Sample*> ptrs;
  for (const auto& s : ds.samples) ptrs.push_back(&s);
  return make_batch(ptrs, ds.dim);
}

inline Batch concat_all(std::span<const DomainDataset> all) {
  std::vector<const Sample*> ptrs;
  for (const auto& ds : all)
    for (const auto& s : ds.samples) ptrs.push_back(&s);
  return make_batch(ptrs, all[0].dim);
}

inline GenSpec small_gen(std::uint64_t seed = 3) {
  GenSpec g;
  g.seed = seed;
  g.ids_per_domain = 8;
  g.samples_per_id = 6;
  g.dim = 8;
  g.latent_dim = 4;
  g.heldout_ids = 6;
  g.heldout_samples_per_id = 5;
  return g;
}

inline NetSpec small_spec(std::size_t input, std::size_t domains, std::size_t classes,
                          bool tied = false) {
  NetSpec s;
  s.input_dim = input;
  s.hidden = {6, 5};
  s.embed_dim = 4;
  s.num_domains = domains;
  s.num_classes = classes;
  s.tied_bn = tied;
  return s;
}

inline void randomize_bn(EmbedNet& net, Rng& rng) {
  for (std::size_t l = 0; l < net.num_bn_layers(); ++l) {
    auto& bn = net.bn(l);
    for (std::size_t s = 0; s < bn.slots(); ++s) {
      for (double& v : bn.gamma(s).values()) v = 1.0 + 0.3 * rng.normal();
      for (double& v : bn.beta(s).values()) v = 0.3 * rng.normal();
      Tensor mean(Shape{bn.channels()}), var(Shape{bn.channels()});
      for (double& v : mean.values()) v = 0.5 * rng.normal();
      for (double& v : var.values()) v = 0.5 + rng.uniform();
      bn.set_running_stats(s, std::move(mean), std::move(var));
    }
  }
}

}  // namespace testutil
