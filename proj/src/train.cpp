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

#include "gdnorm/train.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"

#include "gdnorm/errors.hpp"
#include "gdnorm/optim.hpp"

namespace gdnorm {

namespace {

constexpr std::uint64_t kMixedStream = 0x6d69786564ULL;
constexpr std::uint64_t kPathStream = 0x70617468ULL;

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_ids < 2) throw ConfigError("train.batch_ids (P) must be >= 2");
  if (batch_instances < 2) throw ConfigError("train.batch_instances (Q) must be >= 2");
  if (!(margin >= 0.0)) throw ConfigError("train.margin must be >= 0");
  if (n_paths < 1) throw ConfigError("train.n_paths must be >= 1");
  if (!(id_weight >= 0.0) || !(triplet_weight >= 0.0)) {
    throw ConfigError("train loss weights must be >= 0");
  }
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return epoch >= lr_decay_epoch ? lr * lr_decay_factor : lr;
}

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss_id"] = loss_id;
  j["loss_triplet"] = loss_triplet;
  j["loss_refine"] = loss_refine;
  j["lr"] = lr;
  return j.dump();
}

ClassIndex::ClassIndex(std::span<const DomainDataset> datasets) {
  std::set<std::size_t> ids;
  for (const auto& ds : datasets)
    for (const auto& s : ds.samples) ids.insert(s.identity);
  for (std::size_t id : ids) index_.emplace(id, index_.size());
}

std::size_t ClassIndex::at(std::size_t identity) const {
  auto it = index_.find(identity);
  if (it == index_.end()) {
    throw IndexError("identity " + std::to_string(identity) + " is not a training class");
  }
  return it->second;
}

std::vector<std::size_t> ClassIndex::labels(std::span<const std::size_t> identities) const {
  std::vector<std::size_t> out;
  out.reserve(identities.size());
  for (std::size_t id : identities) out.push_back(at(id));
  return out;
}

namespace {

std::size_t batch_domain(const Batch& b) {
  if (b.size() == 0) throw ContractError("empty batch");
  for (std::size_t d : b.domains) {
    if (d != b.domains[0]) {
      throw ContractError("supervised batches must come from a single domain");
    }
  }
  return b.domains[0];
}

Var weighted_loss(Tape& tape, EmbedNet& net, Var emb, const Batch& b,
                  const ClassIndex& classes, const TrainConfig& cfg, StepLosses& acc) {
  const auto labels = classes.labels(b.identities);
  Var id = identity_loss(tape, net, emb, labels);
  Var tr = triplet_loss(tape, emb, b.identities, cfg.margin);
  acc.id += tape.value(id).item();
  acc.triplet += tape.value(tr).item();
  return tape.add(tape.scale(id, cfg.id_weight), tape.scale(tr, cfg.triplet_weight));
}

struct SupervisedPass {
  Var loss;
  StepLosses parts;
  std::vector<EmbedNet::Forward> forwards;
  std::vector<std::size_t> slots;  // normalization slot per forward
};

Batch concat(std::span<const Batch> batches) {
  std::size_t rows = 0;
  for (const auto& b : batches) rows += b.size();
  Batch out;
  out.x = Tensor(Shape{rows, batches[0].x.cols()});
  std::size_t offset = 0;
  for (const auto& b : batches) {
    if (b.x.cols() != out.x.cols()) throw DimensionError("batch widths differ");
    std::copy(b.x.values().begin(), b.x.values().end(), out.x.values().begin() + offset);
    offset += b.x.size();
    out.identities.insert(out.identities.end(), b.identities.begin(), b.identities.end());
    out.domains.insert(out.domains.end(), b.domains.begin(), b.domains.end());
  }
  return out;
}

SupervisedPass supervised_pass(Tape& tape, EmbedNet& net, std::span<const Batch> batches,
                               const ClassIndex& classes, const TrainConfig& cfg) {
  if (batches.empty()) throw ContractError("supervised step without batches");
  for (const auto& b : batches) batch_domain(b);
  // A shared normalization layer sees all domains as one batch.
  std::vector<Batch> joint;
  if (net.spec().tied_bn && batches.size() > 1) {
    joint.push_back(concat(batches));
    batches = joint;
  }
  SupervisedPass pass;
  std::vector<Var> losses;
  for (const auto& b : batches) {
    const std::size_t d = b.domains[0];
    auto fwd = net.forward(tape, tape.constant(b.x), bn_mode::TrainDomain{d});
    losses.push_back(weighted_loss(tape, net, fwd.embeddings, b, classes, cfg, pass.parts));
    pass.forwards.push_back(std::move(fwd));
    pass.slots.push_back(net.slot_of(d));
  }
  pass.loss = tape.mean(losses);
  const double n = static_cast<double>(batches.size());
  pass.parts.id /= n;
  pass.parts.triplet /= n;
  return pass;
}

void check_mixed(const EmbedNet& net, const Batch& mixed) {
  std::vector<std::size_t> counts(net.num_domains(), 0);
  for (std::size_t d : mixed.domains) {
    if (d >= counts.size()) throw IndexError("mixed batch domain out of range");
    ++counts[d];
  }
  for (std::size_t c : counts) {
    if (c == 0 || c != counts[0]) {
      throw ContractError("refine batch must draw equally from every source domain");
    }
  }
}

}  // namespace

Var supervised_loss(Tape& tape, EmbedNet& net, std::span<const Batch> batches,
                    const ClassIndex& classes, const TrainConfig& cfg, StepLosses* parts) {
  auto pass = supervised_pass(tape, net, batches, classes, cfg);
  if (parts) *parts = pass.parts;
  return pass.loss;
}

StepLosses supervised_step(EmbedNet& net, std::span<const Batch> batches,
                           const ClassIndex& classes, const TrainConfig& cfg, double lr) {
  Tape tape;
  auto pass = supervised_pass(tape, net, batches, classes, cfg);
  tape.backward(pass.loss);

  std::map<std::size_t, std::vector<std::size_t>> by_slot;
  for (std::size_t i = 0; i < pass.slots.size(); ++i) by_slot[pass.slots[i]].push_back(i);
  std::vector<ParamGroup> groups;
  groups.push_back({net.shared_params(), 1.0});
  // A slot's share of the mean objective is members/n; rescale so its
  // gradient is the mean gradient of its own batches.
  for (const auto& [slot, members] : by_slot) {
    const double scale =
        static_cast<double>(pass.slots.size()) / static_cast<double>(members.size());
    groups.push_back({net.slot_params(slot), scale});
  }
  sgd_step(groups, lr, cfg.weight_decay);

  for (const auto& [slot, members] : by_slot) {
    for (std::size_t l = 0; l < net.num_bn_layers(); ++l) {
      Tensor mean = pass.forwards[members[0]].batch_mean[l];
      Tensor var = pass.forwards[members[0]].batch_var[l];
      if (members.size() > 1) {
        for (std::size_t m = 1; m < members.size(); ++m) {
          const auto& f = pass.forwards[members[m]];
          for (std::size_t c = 0; c < mean.size(); ++c) {
            mean[c] += f.batch_mean[l][c];
            var[c] += f.batch_var[l][c];
          }
        }
        const double n = static_cast<double>(members.size());
        for (std::size_t c = 0; c < mean.size(); ++c) {
          mean[c] /= n;
          var[c] /= n;
        }
      }
      net.bn(l).update_running_stats(slot, mean, var);
    }
  }
  return pass.parts;
}

Var refine_loss(Tape& tape, EmbedNet& net, const Batch& mixed, const ClassIndex& classes,
                const TrainConfig& cfg, Rng& rng) {
  check_mixed(net, mixed);
  std::vector<PathVars> slots;
  for (std::size_t s = 0; s < net.num_slots(); ++s) {
    PathVars p;
    for (std::size_t l = 0; l < net.num_bn_layers(); ++l) {
      auto [a, b] = net.bn(l).linearize(tape, s);
      p.a.push_back(a);
      p.b.push_back(b);
    }
    slots.push_back(std::move(p));
  }
  GpVars gp = estimate_gp(tape, slots, net.spec().tied_bn);
  Var x = tape.constant(mixed.x);
  std::vector<Var> losses;
  StepLosses unused;
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    PathVars path = sample_path(tape, gp, cfg.lambda, rng, cfg.noise_scale);
    Var emb = net.forward(tape, x, path);
    losses.push_back(weighted_loss(tape, net, emb, mixed, classes, cfg, unused));
  }
  return tape.mean(losses);
}

StepLosses refine_step(EmbedNet& net, const Batch& mixed, const ClassIndex& classes,
                       const TrainConfig& cfg, Rng& rng, double lr) {
  Tape tape;
  Var loss = refine_loss(tape, net, mixed, classes, cfg, rng);
  tape.backward(loss);
  std::vector<ParamGroup> groups;
  groups.push_back({net.shared_params(), 1.0});
  const double slot_scale = static_cast<double>(net.num_slots());
  for (std::size_t s = 0; s < net.num_slots(); ++s) {
    groups.push_back({net.slot_params(s), slot_scale});
  }
  sgd_step(groups, lr, cfg.weight_decay);
  return StepLosses{tape.value(loss).item(), 0.0};
}

NetSpec net_spec_for(std::span<const DomainDataset> datasets, std::size_t input_dim,
                     std::vector<std::size_t> hidden, std::size_t embed_dim,
                     bool tied_bn, double eps, double momentum) {
  NetSpec spec;
  spec.input_dim = input_dim;
  spec.hidden = std::move(hidden);
  spec.embed_dim = embed_dim;
  spec.num_domains = datasets.size();
  spec.num_classes = ClassIndex(datasets).size();
  spec.tied_bn = tied_bn;
  spec.eps = eps;
  spec.momentum = momentum;
  return spec;
}

TrainResult train(EmbedNet& net, std::span<const DomainDataset> datasets,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (datasets.empty()) throw ContractError("train needs at least one domain");
  for (const auto& ds : datasets) {
    if (ds.samples.empty()) throw ContractError("train: empty dataset");
  }
  if (datasets.size() != net.num_domains()) {
    throw ContractError("model has " + std::to_string(net.num_domains()) +
                        " domains, got " + std::to_string(datasets.size()) + " datasets");
  }
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (datasets[k].domain_id != k) {
      throw ContractError("dataset " + std::to_string(k) + " carries domain id " +
                          std::to_string(datasets[k].domain_id));
    }
  }
  const ClassIndex classes(datasets);
  if (classes.size() != net.spec().num_classes) {
    throw ContractError("classifier covers " + std::to_string(net.spec().num_classes) +
                        " identities, datasets have " + std::to_string(classes.size()));
  }

  const std::size_t k = datasets.size();
  const std::size_t pq = cfg.batch_ids * cfg.batch_instances;
  std::size_t iters = cfg.iters_per_epoch;
  if (iters == 0) {
    for (const auto& ds : datasets) iters = std::max(iters, (ds.samples.size() + pq - 1) / pq);
  }
  const std::size_t mixed_size = cfg.mixed_batch ? cfg.mixed_batch : k * pq;

  std::vector<Rng> domain_rngs;
  for (const auto& ds : datasets) domain_rngs.emplace_back(mix_seed(cfg.seed, ds.sampling_seed));
  Rng mixed_rng(mix_seed(cfg.seed, kMixedStream));
  Rng path_rng(mix_seed(cfg.seed, kPathStream));

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    StepLosses sup_sum;
    double refine_sum = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      std::vector<Batch> batches;
      for (std::size_t d = 0; d < k; ++d) {
        batches.push_back(sample_pk_batch(datasets[d], cfg.batch_ids,
                                          cfg.batch_instances, domain_rngs[d]));
      }
      StepLosses s = supervised_step(net, batches, classes, cfg, lr);
      sup_sum.id += s.id;
      sup_sum.triplet += s.triplet;
      if (cfg.refine) {
        Batch mixed = sample_mixed_batch(datasets, mixed_size, mixed_rng, cfg.batch_instances);
        refine_sum += refine_step(net, mixed, classes, cfg, path_rng, lr).id;
      }
      ++result.steps;
    }
    const double n = static_cast<double>(iters);
    EpochRecord rec{epoch, result.steps, sup_sum.id / n, sup_sum.triplet / n,
                    cfg.refine ? refine_sum / n : 0.0, lr};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace gdnorm
