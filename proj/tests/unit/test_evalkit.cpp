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
#include <set>

#include "doctest.h"
#include "gdnorm/errors.hpp"
#include "gdnorm/evalkit.hpp"
#include "helpers.hpp"

using namespace gdnorm;
using namespace testutil;

namespace {

void check_cmc(const RetrievalResult& r) {
  for (std::size_t k = 1; k < r.cmc.size(); ++k) CHECK(r.cmc[k] >= r.cmc[k - 1]);
  CHECK(r.cmc.back() <= 1.0);
  double sum = 0.0;
  for (double ap : r.average_precision) sum += ap;
  CHECK(r.map == doctest::Approx(sum / static_cast<double>(r.average_precision.size())).epsilon(1e-15));
}

struct Fixture {
  Benchmark bm;
  RetrievalSplit split;
  EmbedNet net;

  explicit Fixture(std::uint64_t seed = 51)
      : bm(gen_domains(small_gen(seed))),
        split(make_split(bm.heldout, 2)),
        net(net_spec_for(bm.sources, 8, {6, 5}, 4, false, 1e-5, 0.9), seed) {
    Rng rng(seed);
    randomize_bn(net, rng);
  }
};

}  // namespace

TEST_CASE("average precision of a hand-ranked list") {
  // gallery order by distance: match, miss, match
  const std::vector<double> dist{0.1, 0.2, 0.3};
  const std::vector<std::size_t> q{7}, g{7, 8, 7};
  const RetrievalResult r = rank_distances(dist, 1, q, g);
  CHECK(r.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(r.rank(1) == 1.0);
  const int rel[] = {1, 0, 1};
  CHECK(oracle::average_precision(rel) == doctest::Approx(0.8333333333333334).epsilon(1e-15));
}

TEST_CASE("perfect embeddings score one") {
  const Tensor gallery = Tensor::matrix(4, 2, {0, 0, 0, 0, 10, 10, 10, 10});
  const Tensor query = Tensor::matrix(2, 2, {0, 0, 10, 10});
  const std::vector<std::size_t> gid{1, 1, 2, 2}, qid{1, 2};
  const RetrievalResult r = compute_map_cmc(query, qid, gallery, gid);
  CHECK(r.map == 1.0);
  CHECK(r.rank(1) == 1.0);
  check_cmc(r);
}

TEST_CASE("ranking matches the brute-force oracle exactly") {
  Rng rng(52);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t nq = 1 + rng.below(10), ng = 1 + rng.below(20);
    std::vector<std::size_t> gid(ng), qid(nq);
    for (auto& g : gid) g = rng.below(4);
    for (auto& q : qid) q = gid[rng.below(ng)];
    std::vector<double> dist(nq * ng);
    for (double& d : dist) d = rep % 2 ? rng.uniform() : static_cast<double>(rng.below(3));
    const auto got = rank_distances(dist, nq, qid, gid);
    const auto want = oracle::brute_force_retrieval(dist, nq, qid, gid);
    CHECK(got.map == want.map);
    CHECK(got.cmc == want.cmc);
    check_cmc(got);
  }
}

TEST_CASE("ties are broken by gallery index") {
  const std::vector<double> dist{1.0, 1.0};
  const std::vector<std::size_t> q{5}, first{5, 6}, second{6, 5};
  CHECK(rank_distances(dist, 1, q, first).map == 1.0);
  CHECK(rank_distances(dist, 1, q, second).map == 0.5);
}

TEST_CASE("retrieval contract errors") {
  const std::vector<double> dist{0.5};
  const std::vector<std::size_t> q{1}, g{2};
  CHECK_THROWS_AS(rank_distances(dist, 1, q, g), ProtocolError);
  CHECK_THROWS_AS(compute_map_cmc(Tensor(Shape{1, 3}), q, Tensor(Shape{1, 2}), q), DimensionError);
  RetrievalResult r;
  r.cmc = {0.5};
  CHECK_THROWS_AS(r.rank(0), IndexError);
}

TEST_CASE("metrics are invariant under a joint isometry") {
  Rng rng(53);
  const Tensor q = random_tensor({6, 3}, rng), g = random_tensor({15, 3}, rng);
  std::vector<std::size_t> gid(15), qid(6);
  for (std::size_t i = 0; i < 15; ++i) gid[i] = i % 5;
  for (std::size_t i = 0; i < 6; ++i) qid[i] = i % 5;
  // rotation about z then a translation
  const double th = 0.7, c = std::cos(th), s = std::sin(th);
  auto move = [&](const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      y.at(r, 0) = c * x.at(r, 0) - s * x.at(r, 1) + 3.0;
      y.at(r, 1) = s * x.at(r, 0) + c * x.at(r, 1) - 1.0;
      y.at(r, 2) = x.at(r, 2) + 0.5;
    }
    return y;
  };
  const auto a = compute_map_cmc(q, qid, g, gid);
  const auto b = compute_map_cmc(move(q), qid, move(g), gid);
  CHECK(a.map == doctest::Approx(b.map).epsilon(1e-12));
  CHECK(a.cmc == b.cmc);
}

TEST_CASE("split protocol") {
  const Benchmark bm = gen_domains(small_gen());
  const RetrievalSplit split = make_split(bm.heldout, 2);
  CHECK(split.query.size() == 6 * 2);
  CHECK(split.gallery.size() == 6 * 3);
  std::set<std::size_t> gallery_ids;
  for (const auto& s : split.gallery) gallery_ids.insert(s.identity);
  for (const auto& s : split.query) CHECK(gallery_ids.count(s.identity) == 1);
  CHECK_THROWS_AS(make_split(bm.heldout, 5), ContractError);
}

TEST_CASE("mean path evaluation runs one forward pass per batch") {
  Fixture f;
  EvalOptions opt;
  opt.batch_size = 4;
  const auto r = eval_mean_path(f.net, estimate_gp(f.net), f.split, opt);
  CHECK(r.batches == 3 + 5);  // 12 queries and 18 gallery items in batches of 4
  CHECK(r.forward_passes == r.batches);
  const auto e = eval_ensemble(f.net, EnsembleSpec::uniform(f.net), f.split, opt);
  CHECK(e.forward_passes == 3 * e.batches);
  check_cmc(r);
  check_cmc(e);
}

TEST_CASE("evaluation is deterministic") {
  Fixture f;
  const GpEstimate gp = estimate_gp(f.net);
  const auto a = eval_mean_path(f.net, gp, f.split);
  const auto b = eval_mean_path(f.net, gp, f.split);
  CHECK(a.map == b.map);
  CHECK(a.cmc == b.cmc);
  CHECK(eval_single_path(f.net, 1, f.split).map == eval_single_path(f.net, 1, f.split).map);
}

TEST_CASE("single paths") {
  Fixture f;
  CHECK_THROWS_AS(eval_single_path(f.net, 3, f.split), IndexError);
  const BnPath p = f.net.domain_path(2);
  CHECK(eval_single_path(f.net, 2, f.split).map == eval_path(f.net, p, f.split).map);
}

TEST_CASE("identical domains make every path score the same") {
  Fixture f;
  for (std::size_t l = 0; l < f.net.num_bn_layers(); ++l) {
    auto& bn = f.net.bn(l);
    for (std::size_t s = 1; s < 3; ++s) {
      bn.gamma(s) = bn.gamma(0);
      bn.beta(s) = bn.beta(0);
      bn.set_running_stats(s, bn.running_mean(0), bn.running_var(0));
    }
  }
  const double m = eval_mean_path(f.net, estimate_gp(f.net), f.split).map;
  for (std::size_t k = 0; k < 3; ++k) CHECK(eval_single_path(f.net, k, f.split).map == m);
}

TEST_CASE("ensembles") {
  Fixture f;
  SUBCASE("all weight on one domain equals that single path") {
    for (std::size_t k = 0; k < 3; ++k) {
      EnsembleSpec spec = EnsembleSpec::uniform(f.net);
      spec.weights = {0.0, 0.0, 0.0};
      spec.weights[k] = 1.0;
      const auto e = eval_ensemble(f.net, spec, f.split);
      const auto s = eval_single_path(f.net, k, f.split);
      CHECK(e.map == s.map);
      CHECK(e.cmc == s.cmc);
    }
  }
  SUBCASE("one path with weight one") {
    EnsembleSpec spec{{f.net.domain_path(1)}, {1.0}};
    CHECK(eval_ensemble(f.net, spec, f.split).map == eval_single_path(f.net, 1, f.split).map);
  }
  SUBCASE("identical paths with any weights") {
    const BnPath p = f.net.domain_path(0);
    EnsembleSpec spec{{p, p, p}, {0.2, 0.5, 0.3}};
    CHECK(eval_ensemble(f.net, spec, f.split).map ==
          doctest::Approx(eval_single_path(f.net, 0, f.split).map).epsilon(1e-14));
    CHECK(eval_ensemble(f.net, spec, f.split, {}, Fusion::Embedding).map ==
          doctest::Approx(eval_single_path(f.net, 0, f.split).map).epsilon(1e-14));
  }
  SUBCASE("invalid weights") {
    EnsembleSpec spec = EnsembleSpec::uniform(f.net);
    spec.weights = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(eval_ensemble(f.net, spec, f.split), ContractError);
    spec.weights = {1.5, -0.5, 0.0};
    CHECK_THROWS_AS(spec.validate(), ContractError);
    spec.weights = {0.5, 0.5};
    CHECK_THROWS_AS(spec.validate(), ContractError);
    EnsembleSpec empty;
    CHECK_THROWS_AS(empty.validate(), ContractError);
  }
}

TEST_CASE("path spread") {
  Fixture f;
  const double lambdas[] = {0.0, 0.5, 1.0};
  const auto rows = path_spread(f.net, f.split, lambdas, 8, 3);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].min_map == rows[0].mean_path_map);
  CHECK(rows[0].mean_map == rows[0].mean_path_map);
  CHECK(rows[0].max_map == rows[0].mean_path_map);
  for (const auto& r : rows) {
    CHECK(r.min_map <= r.mean_map);
    CHECK(r.mean_map <= r.max_map);
    CHECK(r.paths == 8);
  }
  CHECK(path_spread(f.net, f.split, lambdas, 8, 3)[2].mean_map == rows[2].mean_map);
}

TEST_CASE("a one-value lambda grid gives one sweep row") {
  const Benchmark bm = gen_domains(small_gen());
  const RetrievalSplit split = make_split(bm.heldout, 2);
  const NetSpec spec = net_spec_for(bm.sources, 8, {6}, 4, false, 1e-5, 0.9);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 1;
  cfg.lr_decay_epoch = 1;
  const double grid[] = {0.6};
  const auto rows = sweep_lambda(grid, bm.sources, split, spec, cfg, 4);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].lambda == 0.6);
  CHECK(rows[0].spread.paths == 4);
}
