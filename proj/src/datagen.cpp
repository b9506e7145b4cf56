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

#include "gdnorm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

#include "gdnorm/errors.hpp"

namespace gdnorm {

namespace {

constexpr std::uint64_t kStyleStream = 0x7374796c65ULL;
constexpr std::uint64_t kProtoStream = 0x70726f746fULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kMixStream = 0x6d6978ULL;
constexpr std::uint64_t kSamplerStream = 0x73616d70ULL;

std::vector<double> mixing_matrix(const GenSpec& spec) {
  Rng rng(mix_seed(spec.seed, kMixStream));
  std::vector<double> m(spec.dim * spec.latent_dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  for (double& v : m) v = sd * rng.normal();
  return m;
}

// Domain index num_domains is the held-out domain.
StyleTransform make_style(const GenSpec& spec, std::size_t domain) {
  Rng rng(mix_seed(mix_seed(spec.seed, kStyleStream), domain));
  StyleTransform st;
  st.scale.resize(spec.dim);
  st.shift.resize(spec.dim);
  for (std::size_t j = 0; j < spec.dim; ++j) {
    st.scale[j] = std::exp(0.5 * spec.shift_strength * rng.normal());
    st.shift[j] = spec.shift_strength * rng.normal();
  }
  return st;
}

DomainDataset make_domain(const GenSpec& spec, const std::vector<double>& mix,
                          std::size_t domain, const StyleTransform& style,
                          std::size_t num_ids, std::size_t per_id,
                          std::size_t first_identity, std::uint64_t stream) {
  Rng proto_rng(mix_seed(mix_seed(spec.seed, kProtoStream), stream));
  Rng noise_rng(mix_seed(mix_seed(spec.seed, kNoiseStream), stream));
  DomainDataset ds;
  ds.domain_id = domain;
  ds.dim = spec.dim;
  ds.sampling_seed = mix_seed(mix_seed(spec.seed, kSamplerStream), stream);
  ds.style = style;
  ds.samples.reserve(num_ids * per_id);
  std::vector<double> z(spec.latent_dim), clean(spec.dim);
  for (std::size_t id = 0; id < num_ids; ++id) {
    for (double& v : z) v = proto_rng.normal();
    for (std::size_t j = 0; j < spec.dim; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < spec.latent_dim; ++k) s += mix[j * spec.latent_dim + k] * z[k];
      clean[j] = s;
    }
    for (std::size_t i = 0; i < per_id; ++i) {
      Sample smp;
      smp.identity = first_identity + id;
      smp.domain = domain;
      smp.x.resize(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double raw = clean[j] + spec.noise * noise_rng.normal();
        smp.x[j] = style.scale[j] * raw + style.shift[j];
      }
      ds.samples.push_back(std::move(smp));
    }
  }
  return ds;
}

}  // namespace

void GenSpec::validate() const {
  require(num_domains >= 2, "gen: num_domains must be >= 2");
  require(dim >= 2, "gen: dim must be >= 2");
  require(latent_dim >= 1, "gen: latent_dim must be >= 1");
  require(ids_per_domain >= 2, "gen: ids_per_domain must be >= 2");
  require(samples_per_id >= 2, "gen: samples_per_id must be >= 2");
  require(heldout_ids >= 2, "gen: heldout_ids must be >= 2");
  require(heldout_samples_per_id >= 2, "gen: heldout_samples_per_id must be >= 2");
  require(noise >= 0.0, "gen: noise must be >= 0");
  require(shift_strength >= 0.0, "gen: shift_strength must be >= 0");
}

std::vector<std::size_t> DomainDataset::identities() const {
  std::vector<std::size_t> out;
  std::set<std::size_t> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.identity).second) out.push_back(s.identity);
  }
  return out;
}

void DomainDataset::validate() const {
  if (samples.empty()) throw ContractError("dataset for domain " + std::to_string(domain_id) + " is empty");
  for (const auto& s : samples) {
    if (s.domain != domain_id) {
      throw ContractError("sample carries domain " + std::to_string(s.domain) +
                          " in dataset " + std::to_string(domain_id));
    }
    if (s.x.size() != dim) throw DimensionError("sample width mismatch");
  }
}

Benchmark gen_domains(const GenSpec& spec) {
  spec.validate();
  const auto mix = mixing_matrix(spec);
  Benchmark bm;
  for (std::size_t d = 0; d < spec.num_domains; ++d) {
    bm.sources.push_back(make_domain(spec, mix, d, make_style(spec, d),
                                     spec.ids_per_domain, spec.samples_per_id,
                                     d * spec.ids_per_domain, d));
  }
  const std::size_t k = spec.num_domains;
  bm.heldout = make_domain(spec, mix, k, make_style(spec, k), spec.heldout_ids,
                           spec.heldout_samples_per_id, k * spec.ids_per_domain, k);
  return bm;
}

DomainDataset gen_domain_like(const GenSpec& spec, std::size_t domain,
                              std::size_t num_ids, std::size_t samples_per_id,
                              std::size_t first_identity, std::uint64_t stream) {
  spec.validate();
  if (domain > spec.num_domains) throw IndexError("gen_domain_like: domain out of range");
  return make_domain(spec, mixing_matrix(spec), domain, make_style(spec, domain),
                     num_ids, samples_per_id, first_identity,
                     mix_seed(0x68656c64ULL, stream));
}

Batch make_batch(std::span<const Sample* const> samples, std::size_t dim) {
  Batch b;
  b.x = Tensor(Shape{samples.size(), dim});
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r]->x.size() != dim) throw DimensionError("sample width mismatch");
    std::copy(samples[r]->x.begin(), samples[r]->x.end(), b.x.values().begin() + r * dim);
    b.identities.push_back(samples[r]->identity);
    b.domains.push_back(samples[r]->domain);
  }
  return b;
}

namespace {

// Sample indices per identity, identities in first-appearance order.
std::vector<std::vector<std::size_t>> group_by_identity(const DomainDataset& ds) {
  std::map<std::size_t, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    auto [it, fresh] = slot.emplace(ds.samples[i].identity, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

// First n entries of a uniform random permutation of v.
std::vector<std::size_t> choose(std::vector<std::size_t> v, std::size_t n, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(v[i], v[i + rng.below(v.size() - i)]);
  }
  v.resize(n);
  return v;
}

void append_from_domain(const DomainDataset& ds, std::size_t quota, std::size_t ids,
                        Rng& rng, std::vector<const Sample*>& out) {
  const auto groups = group_by_identity(ds);
  const std::size_t need = (quota + ids - 1) / ids;
  std::vector<std::size_t> eligible;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() >= need) eligible.push_back(g);
  }
  if (eligible.size() < ids) {
    throw ContractError("domain " + std::to_string(ds.domain_id) + " has " +
                        std::to_string(eligible.size()) + " identities with >= " +
                        std::to_string(need) + " samples, need " + std::to_string(ids));
  }
  const auto picked = choose(eligible, ids, rng);
  for (std::size_t j = 0; j < ids; ++j) {
    const std::size_t take = quota / ids + (j < quota % ids ? 1 : 0);
    for (std::size_t idx : choose(groups[picked[j]], take, rng)) {
      out.push_back(&ds.samples[idx]);
    }
  }
}

}  // namespace

Batch sample_pk_batch(const DomainDataset& ds, std::size_t p, std::size_t q, Rng& rng) {
  require(p >= 1 && q >= 1, "sample_pk_batch: P and Q must be >= 1");
  if (ds.samples.empty()) throw ContractError("sample_pk_batch on an empty dataset");
  std::vector<const Sample*> picked;
  const auto groups = group_by_identity(ds);
  std::vector<std::size_t> eligible;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() >= q) eligible.push_back(g);
  }
  if (eligible.size() < p) {
    throw ContractError("domain " + std::to_string(ds.domain_id) + " has " +
                        std::to_string(eligible.size()) + " identities with >= " +
                        std::to_string(q) + " samples, need " + std::to_string(p));
  }
  for (std::size_t g : choose(eligible, p, rng)) {
    for (std::size_t idx : choose(groups[g], q, rng)) picked.push_back(&ds.samples[idx]);
  }
  return make_batch(picked, ds.dim);
}

Batch sample_mixed_batch(std::span<const DomainDataset> datasets, std::size_t total,
                         Rng& rng, std::size_t per_id) {
  if (datasets.empty()) throw ContractError("sample_mixed_batch needs at least one domain");
  if (total == 0 || total % datasets.size() != 0) {
    throw ContractError("mixed batch of " + std::to_string(total) +
                        " is not divisible by " + std::to_string(datasets.size()) +
                        " domains");
  }
  require(per_id >= 1, "sample_mixed_batch: per_id must be >= 1");
  const std::size_t quota = total / datasets.size();
  const std::size_t ids = std::max<std::size_t>(1, quota / per_id);
  std::vector<const Sample*> picked;
  for (const auto& ds : datasets) append_from_domain(ds, quota, ids, rng, picked);
  return make_batch(picked, datasets[0].dim);
}

void write_dataset_jsonl(const DomainDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& s : ds.samples) {
    nlohmann::json j;
    j["domain"] = s.domain;
    j["identity"] = s.identity;
    j["features"] = s.x;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

DomainDataset read_dataset_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  DomainDataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Sample s;
      s.domain = j.at("domain").get<std::size_t>();
      s.identity = j.at("identity").get<std::size_t>();
      s.x = j.at("features").get<std::vector<double>>();
      ds.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (ds.samples.empty()) throw ContractError("dataset file " + path + " is empty");
  ds.domain_id = ds.samples[0].domain;
  ds.dim = ds.samples[0].x.size();
  ds.sampling_seed = mix_seed(kSamplerStream, ds.domain_id);
  ds.validate();
  return ds;
}

}  // namespace gdnorm
