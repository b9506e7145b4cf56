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
#include <span>
#include <string>
#include <vector>

#include "gdnorm/rng.hpp"
#include "gdnorm/tensor.hpp"

namespace gdnorm {

struct Sample {
  std::vector<double> x;
  std::size_t identity = 0;
  std::size_t domain = 0;
};

// Parameters of the synthetic benchmark. Identities are prototypes in a
// latent space lifted to `dim` by a mixing matrix shared by all domains;
// every domain applies its own diagonal affine style map.
struct GenSpec {
  std::uint64_t seed = 0;
  std::size_t num_domains = 3;
  std::size_t ids_per_domain = 32;
  std::size_t samples_per_id = 16;
  std::size_t dim = 32;
  std::size_t latent_dim = 8;
  double noise = 1.0;
  double shift_strength = 1.0;
  std::size_t heldout_ids = 16;
  std::size_t heldout_samples_per_id = 8;

  void validate() const;
};

struct StyleTransform {
  std::vector<double> scale;
  std::vector<double> shift;
};

struct DomainDataset {
  std::size_t domain_id = 0;
  std::size_t dim = 0;
  // Seeds this domain's batch sampler; copies of a dataset share it.
  std::uint64_t sampling_seed = 0;
  StyleTransform style;
  std::vector<Sample> samples;

  // Distinct identities in first-appearance order.
  std::vector<std::size_t> identities() const;
  void validate() const;
};

struct Benchmark {
  std::vector<DomainDataset> sources;
  DomainDataset heldout;
};

// K source domains plus one held-out domain with an unseen style and fresh
// identities. Identity ids are contiguous and disjoint across domains.
Benchmark gen_domains(const GenSpec& spec);

// Fresh identities drawn with an existing domain's style (held-in test data
// for that domain). Identity ids start at `first_identity`.
DomainDataset gen_domain_like(const GenSpec& spec, std::size_t domain,
                              std::size_t num_ids, std::size_t samples_per_id,
                              std::size_t first_identity, std::uint64_t stream);

struct Batch {
  Tensor x;
  std::vector<std::size_t> identities;
  std::vector<std::size_t> domains;

  std::size_t size() const noexcept { return identities.size(); }
};

Batch make_batch(std::span<const Sample* const> samples, std::size_t dim);

// P distinct identities with Q distinct samples each, from one domain.
Batch sample_pk_batch(const DomainDataset& ds, std::size_t p, std::size_t q, Rng& rng);

// Exactly total/K samples from each domain; within a domain the quota is
// spread evenly over max(1, quota / per_id) identities.
Batch sample_mixed_batch(std::span<const DomainDataset> datasets, std::size_t total,
                         Rng& rng, std::size_t per_id = 4);

// Line-delimited JSON: {"domain":d,"identity":i,"features":[...]}.
void write_dataset_jsonl(const DomainDataset& ds, const std::string& path);
DomainDataset read_dataset_jsonl(const std::string& path);

}  // namespace gdnorm
