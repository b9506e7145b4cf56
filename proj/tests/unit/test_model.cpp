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

#include <cmath>

#include "doctest.h"
#include "gdnorm/errors.hpp"
#include "gdnorm/model.hpp"
#include "gdnorm/train.hpp"
#include "helpers.hpp"

using namespace gdnorm;
using namespace testutil;

namespace {

struct Toy {
  std::vector<DomainDataset> domains;
  ClassIndex classes;
};

Toy toy(std::size_t k = 3, std::uint64_t seed = 31) {
  Rng rng(seed);
  Toy t;
  for (std::size_t d = 0; d < k; ++d) {
    t.domains.push_back(toy_domain(d, 2, 2, 5, 2 * d, rng, 0.5 * static_cast<double>(d)));
  }
  t.classes = ClassIndex(t.domains);
  return t;
}

std::vector<Tensor> snapshot(const EmbedNet& net) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : net.named_tensors()) out.push_back(*t);
  return out;
}

TrainConfig quick_cfg() {
  TrainConfig c;
  c.lr = 0.05;
  c.epochs = 3;
  c.lr_decay_epoch = 2;
  c.batch_ids = 2;  // toy domains hold 2 identities of 2 samples
  c.batch_instances = 2;
  return c;
}

}  // namespace

TEST_CASE("per-domain forward equals forward through the domain path") {
  Rng rng(32);
  EmbedNet net(small_spec(5, 3, 6), 2);
  randomize_bn(net, rng);
  const Tensor x = random_tensor({4, 5}, rng);
  for (std::size_t k = 0; k < 3; ++k) {
    const BnPath p = net.domain_path(k);
    const Tensor a = net.embed(x, bn_mode::Domain{k});
    const Tensor b = net.embed(x, bn_mode::Path{&p});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("with identical domains the mean path equals every domain path") {
  Rng rng(33);
  EmbedNet net(small_spec(5, 3, 6), 3);
  randomize_bn(net, rng);
  for (std::size_t l = 0; l < net.num_bn_layers(); ++l) {
    auto& bn = net.bn(l);
    for (std::size_t s = 1; s < 3; ++s) {
      bn.gamma(s) = bn.gamma(0);
      bn.beta(s) = bn.beta(0);
      bn.set_running_stats(s, bn.running_mean(0), bn.running_var(0));
    }
  }
  const BnPath mean = mean_path(estimate_gp(net));
  const Tensor x = random_tensor({3, 5}, rng);
  const Tensor m = net.embed(x, bn_mode::Path{&mean});
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor d = net.embed(x, bn_mode::Domain{k});
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(m[i] - d[i]) <= 1e-12);
  }
}

TEST_CASE("eval-mode forward accepts a single sample") {
  EmbedNet net(small_spec(5, 2, 4), 4);
  const Tensor e = net.embed(Tensor(Shape{1, 5}, 0.3), bn_mode::Domain{1});
  CHECK(e.rows() == 1);
  CHECK(e.cols() == 4);
  CHECK(e.all_finite());
}

TEST_CASE("forward mode and shape errors") {
  EmbedNet net(small_spec(5, 2, 4), 5);
  const Tensor x(Shape{2, 5});
  CHECK_THROWS_AS(net.embed(x, bn_mode::Domain{2}), IndexError);
  CHECK_THROWS_AS(net.embed(Tensor(Shape{2, 4}), bn_mode::Domain{0}), DimensionError);
  BnPath short_path;
  CHECK_THROWS_AS(net.embed(x, bn_mode::Path{&short_path}), DimensionError);
  CHECK_THROWS_AS(net.embed(x, bn_mode::TrainDomain{0}), ContractError);
}

TEST_CASE("model structure") {
  const EmbedNet net(small_spec(5, 3, 6), 6);
  CHECK(net.num_bn_layers() == 3);  // two hidden layers plus the embedding
  CHECK(net.bn_widths() == std::vector<std::size_t>{6, 5, 4});
  CHECK(net.classifier().shape() == Shape{4, 6});
  CHECK(net.num_slots() == 3);
  const EmbedNet tied(small_spec(5, 3, 6, true), 6);
  CHECK(tied.num_slots() == 1);
  CHECK(tied.slot_of(2) == 0);
}

TEST_CASE("identity loss") {
  EmbedNet net(small_spec(5, 2, 4), 7);
  SUBCASE("zero classifier gives ln N") {
    for (double& v : net.classifier().values()) v = 0.0;
    Tape t;
    const std::vector<std::size_t> labels{0, 3};
    const Var e = t.constant(Tensor(Shape{2, 4}, 1.0));
    CHECK(t.value(identity_loss(t, net, e, labels)).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }
  SUBCASE("matches the oracle on the classifier logits") {
    Rng rng(34);
    for (double& v : net.classifier().values()) v = rng.normal();
    const Tensor e = random_tensor({3, 4}, rng);
    const std::vector<std::size_t> labels{2, 0, 1};
    Tape t;
    const double got = t.value(identity_loss(t, net, t.constant(e), labels)).item();
    Tensor logits(Shape{3, 4});
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t j = 0; j < 4; ++j) logits.at(r, c) += e.at(r, j) * net.classifier().at(j, c);
    CHECK(std::abs(got - oracle::cross_entropy(logits, labels)) <= 1e-10);
  }
}

TEST_CASE("supervised step touches only the shared weights and the stepped domain") {
  Toy t = toy();
  EmbedNet net(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 8);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto before = snapshot(net);
    const Batch b = whole(t.domains[j]);
    supervised_step(net, std::span(&b, 1), t.classes, quick_cfg(), 0.05);
    const auto after = snapshot(net);
    const auto names = net.named_tensors();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string& name = names[i].first;
      const bool is_bn = name.rfind("bn/", 0) == 0;
      // bn/{layer}/{slot}/{field}
      const auto slot_at = name.find('/', 3) + 1;
      const bool own =
          is_bn && name.substr(slot_at, name.find('/', slot_at) - slot_at) == std::to_string(j);
      CAPTURE(name);
      if (is_bn && !own) {
        CHECK(after[i].same_values(before[i]));
      } else {
        CHECK_FALSE(after[i].same_values(before[i]));
      }
    }
  }
}

TEST_CASE("supervised batches must each come from one domain") {
  Toy t = toy();
  EmbedNet net(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 9);
  const Batch mixed = concat_all(t.domains);
  CHECK_THROWS_AS(supervised_step(net, std::span(&mixed, 1), t.classes, quick_cfg(), 0.05),
                  ContractError);
}

TEST_CASE("refine step") {
  Toy t = toy();
  const Batch mixed = concat_all(t.domains);
  TrainConfig cfg = quick_cfg();

  SUBCASE("every domain's gamma and beta receive gradient") {
    Rng rng(35);
    EmbedNet net(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 10);
    randomize_bn(net, rng);
    Tape tape;
    Rng noise(1);
    tape.backward(refine_loss(tape, net, mixed, t.classes, cfg, noise));
    for (std::size_t s = 0; s < 3; ++s)
      for (Tensor* p : net.slot_params(s)) {
        REQUIRE(p->has_grad());
        double norm = 0.0;
        for (double g : p->grad()) norm += g * g;
        CHECK(norm > 0.0);
      }
  }
  SUBCASE("lambda zero equals the loss under the mean path") {
    Rng rng(36);
    EmbedNet net(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 11);
    randomize_bn(net, rng);
    cfg.lambda = 0.0;
    Tape tape;
    Rng noise(2);
    const double got = tape.value(refine_loss(tape, net, mixed, t.classes, cfg, noise)).item();
    const BnPath mean = mean_path(estimate_gp(net));
    const Tensor e = net.embed(mixed.x, bn_mode::Path{&mean});
    Tensor logits(Shape{e.rows(), net.classifier().cols()});
    for (std::size_t r = 0; r < e.rows(); ++r)
      for (std::size_t c = 0; c < logits.cols(); ++c)
        for (std::size_t j = 0; j < e.cols(); ++j) logits.at(r, c) += e.at(r, j) * net.classifier().at(j, c);
    const auto labels = t.classes.labels(mixed.identities);
    const double want = oracle::cross_entropy(logits, labels) +
                        oracle::batch_hard_triplet(e, labels, cfg.margin);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
  SUBCASE("gradient through estimation and sampling on a one-layer model") {
    Rng rng(37);
    NetSpec spec = net_spec_for(t.domains, 5, {}, 4, false, 1e-5, 0.9);
    EmbedNet net(spec, 12);
    randomize_bn(net, rng);
    std::vector<Tensor*> gammas;
    for (std::size_t s = 0; s < 3; ++s) gammas.push_back(&net.bn(0).gamma(s));
    const double err = max_grad_error(gammas, [&](Tape& tape) {
      Rng noise(3);
      return refine_loss(tape, net, mixed, t.classes, cfg, noise);
    });
    CHECK(err <= 1e-4);
  }
  SUBCASE("mixed batch must cover every domain equally") {
    EmbedNet net(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 13);
    const Batch partial = whole(t.domains[0]);
    Rng noise(4);
    CHECK_THROWS_AS(refine_step(net, partial, t.classes, cfg, noise, 0.05), ContractError);
  }
}

TEST_CASE("refine with identical domains matches the tied model") {
  Toy t = toy();
  std::vector<DomainDataset> same;
  for (std::size_t k = 0; k < 3; ++k) {
    DomainDataset d = t.domains[0];
    d.domain_id = k;
    for (auto& s : d.samples) {
      s.domain = k;
    }
    same.push_back(d);
  }
  // identities are shared, so relabel the copies onto one class range
  const ClassIndex classes{std::span<const DomainDataset>(same).first(1)};
  const Batch mixed = concat_all(same);
  EmbedNet dg(net_spec_for(std::span(same).first(1), 5, {6, 5}, 4, false, 1e-5, 0.9), 14);
  // widen to three identical slots
  NetSpec spec = dg.spec();
  spec.num_domains = 3;
  EmbedNet untied(spec, 14);
  spec.tied_bn = true;
  EmbedNet tied(spec, 14);
  TrainConfig cfg = quick_cfg();
  Rng a(5), b(5);
  refine_step(untied, mixed, classes, cfg, a, 0.05);
  refine_step(tied, mixed, classes, cfg, b, 0.05);
  for (std::size_t l = 0; l < untied.num_bn_layers(); ++l) {
    const Tensor& wu = untied.weight(l);
    const Tensor& wt = tied.weight(l);
    for (std::size_t i = 0; i < wu.size(); ++i) CHECK(std::abs(wu[i] - wt[i]) <= 1e-12);
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < wu.cols(); ++c) {
        CHECK(std::abs(untied.bn(l).gamma(s)[c] - tied.bn(l).gamma(0)[c]) <= 1e-12);
        CHECK(std::abs(untied.bn(l).beta(s)[c] - tied.bn(l).beta(0)[c]) <= 1e-12);
      }
  }
}

TEST_CASE("train") {
  Toy t = toy();
  SUBCASE("zero epochs leaves the model unchanged") {
    EmbedNet net(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 15);
    const EmbedNet init = net;
    TrainConfig cfg = quick_cfg();
    cfg.epochs = 0;
    cfg.lr_decay_epoch = 0;
    const auto res = train(net, t.domains, cfg);
    CHECK(res.log.empty());
    CHECK(net.same_parameters(init));
  }
  SUBCASE("identical config gives an identical log and model") {
    EmbedNet a(net_spec_for(t.domains, 5, {6, 5}, 4, false, 1e-5, 0.9), 16);
    EmbedNet b = a;
    const auto la = train(a, t.domains, quick_cfg()).log;
    const auto lb = train(b, t.domains, quick_cfg()).log;
    CHECK(la == lb);
    CHECK(a.same_parameters(b));
    for (const auto& r : la) {
      CHECK(std::isfinite(r.loss_id));
      CHECK(std::isfinite(r.loss_triplet));
      CHECK(std::isfinite(r.loss_refine));
    }
  }
  SUBCASE("learning rate schedule") {
    TrainConfig cfg;
    cfg.lr = 0.1;
    CHECK(cfg.lr_at(39) == 0.1);
    CHECK(cfg.lr_at(40) == doctest::Approx(0.01).epsilon(1e-15));
  }
  SUBCASE("domain count mismatch") {
    EmbedNet net(small_spec(5, 2, 6), 17);
    CHECK_THROWS_AS(train(net, t.domains, quick_cfg()), ContractError);
  }
}

TEST_CASE("training config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_ids = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_instances = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training loss falls over the first epochs of the desk benchmark") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GenSpec g;
    g.seed = seed;
    const Benchmark bm = gen_domains(g);
    EmbedNet net(net_spec_for(bm.sources, g.dim, {64, 64}, 32, false, 1e-5, 0.9), seed);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 5;
    cfg.seed = seed;
    const auto log = train(net, bm.sources, cfg).log;
    REQUIRE(log.size() == 5);
    for (std::size_t e = 1; e < log.size(); ++e) {
      CAPTURE(seed);
      CAPTURE(e);
      CHECK(log[e].loss_id + log[e].loss_triplet < log[e - 1].loss_id + log[e - 1].loss_triplet);
    }
  }
}

TEST_CASE("checkpoint tensor names and overwrite") {
  EmbedNet net(small_spec(5, 2, 4), 18);
  const auto names = net.named_tensors();
  CHECK(names.front().first == "linear/0/weight");
  CHECK(names.back().first == "classifier");
  CHECK_THROWS_AS(net.set_tensor("nope", Tensor(Shape{1})), IndexError);
  CHECK_THROWS_AS(net.set_tensor("classifier", Tensor(Shape{1})), DimensionError);
  CHECK_THROWS_AS(net.set_tensor("bn/0/1/running_var", Tensor(Shape{6}, -1.0)), ContractError);
  net.set_tensor("bn/0/1/running_var", Tensor(Shape{6}, 2.0));
  CHECK(net.bn(0).running_var(1)[3] == 2.0);
}
