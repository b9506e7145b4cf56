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
#include <limits>

#include "doctest.h"
#include "gdnorm/errors.hpp"
#include "gdnorm/optim.hpp"
#include "helpers.hpp"

using namespace gdnorm;
using namespace testutil;

TEST_CASE("linear with identity weights passes the input through") {
  Tape t;
  const Var y = t.linear(t.constant(Tensor::matrix(1, 2, {1, 2})),
                         t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                         t.constant(Tensor::vector({0, 0})));
  CHECK(t.value(y).same_values(Tensor::matrix(1, 2, {1, 2})));
}

TEST_CASE("linear with zero weights returns the bias") {
  Tape t;
  const Var y = t.linear(t.constant(Tensor::matrix(1, 2, {1, 2})),
                         t.constant(Tensor::matrix(2, 2, {0, 0, 0, 0})),
                         t.constant(Tensor::vector({3, 4})));
  CHECK(t.value(y).same_values(Tensor::matrix(1, 2, {3, 4})));
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(1);
  Tensor x = trainable(random_tensor({3, 4}, rng));
  Tensor w = trainable(random_tensor({4, 2}, rng));
  Tensor b = trainable(random_tensor({2}, rng));
  const Tensor c = random_tensor({3, 2}, rng);
  const double err = max_grad_error({&x, &w, &b}, [&](Tape& t) {
    return t.sum(t.mul_const(t.linear(t.param(x), t.param(w), t.param(b)), c));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("linear rejects mismatched shapes") {
  Tape t;
  CHECK_THROWS_AS(t.linear(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{4, 2}))),
                  DimensionError);
  CHECK_THROWS_AS(t.linear(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{3, 2})),
                           t.constant(Tensor(Shape{3}))),
                  DimensionError);
}

TEST_CASE("relu") {
  Tape t;
  CHECK(t.value(t.relu(t.constant(Tensor::vector({-1, 0, 2})))).same_values(
      Tensor::vector({0, 0, 2})));
  const Tensor pos = Tensor::vector({0.5, 1, 7});
  CHECK(t.value(t.relu(t.constant(pos))).same_values(pos));
}

TEST_CASE("relu gradient matches finite differences away from zero") {
  Rng rng(2);
  Tensor x = trainable(random_tensor({4, 3}, rng));
  for (double& v : x.values()) {
    if (std::abs(v) < 0.1) v += 0.5;
  }
  const Tensor c = random_tensor({4, 3}, rng);
  CHECK(max_grad_error({&x}, [&](Tape& t) { return t.sum(t.mul_const(t.relu(t.param(x)), c)); }) <=
        1e-4);
}

TEST_CASE("backward of a sum gives all-ones gradient") {
  Tensor x = trainable(Tensor::vector({1, -2, 3}));
  Tape t;
  t.backward(t.sum(t.param(x)));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("a loss with zero dependence gives zero gradients") {
  Tensor x = trainable(Tensor::vector({1, -2, 3}));
  Tape t;
  t.backward(t.scale(t.sum(t.param(x)), 0.0));
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("two-layer network gradients match finite differences") {
  Rng rng(3);
  Tensor x = random_tensor({5, 4}, rng);
  Tensor w1 = trainable(random_tensor({4, 6}, rng, 0.5));
  Tensor b1 = trainable(random_tensor({6}, rng));
  Tensor w2 = trainable(random_tensor({6, 3}, rng, 0.5));
  Tensor b2 = trainable(random_tensor({3}, rng));
  const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
  const double err = max_grad_error({&w1, &b1, &w2, &b2}, [&](Tape& t) {
    const Var h = t.relu(t.linear(t.constant(x), t.param(w1), t.param(b1)));
    return t.cross_entropy(t.linear(h, t.param(w2), t.param(b2)), labels);
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("random networks of depth up to 4 and width up to 16 pass the gradient check") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const std::size_t depth = 1 + rng.below(4);
    std::vector<std::size_t> widths{2 + rng.below(15)};
    for (std::size_t l = 0; l < depth; ++l) widths.push_back(2 + rng.below(15));
    std::vector<Tensor> ws, gs, bs;
    for (std::size_t l = 0; l < depth; ++l) {
      ws.push_back(trainable(random_tensor({widths[l], widths[l + 1]}, rng, 0.5)));
      gs.push_back(trainable(random_tensor({widths[l + 1]}, rng, 0.3)));
      bs.push_back(trainable(random_tensor({widths[l + 1]}, rng, 0.3)));
      for (double& g : gs.back().values()) g += 1.0;
    }
    const Tensor x = random_tensor({6, widths[0]}, rng);
    const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
    // entry weights break the per-channel invariance of a plain sum of squares
    const Tensor c = random_tensor({6, widths[depth]}, rng, 0.1);
    std::vector<Tensor*> params;
    for (std::size_t l = 0; l < depth; ++l) params.insert(params.end(), {&ws[l], &gs[l], &bs[l]});
    const double err = max_grad_error(params, [&](Tape& t) {
      Var h = t.constant(x);
      for (std::size_t l = 0; l < depth; ++l) {
        h = t.batch_norm(t.linear(h, t.param(ws[l])), t.param(gs[l]), t.param(bs[l]), 1e-5).y;
        if (l + 1 < depth) h = t.relu(h);
      }
      return t.add(t.batch_hard_triplet(h, labels, 0.3), t.sum(t.mul_const(t.square(h), c)));
    }, 1e-5);  // dead ReLU channels have exactly zero gradient; 1e-5 clears the roundoff
    CAPTURE(seed);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("second backward on one tape is a contract error") {
  Tensor x = trainable(Tensor::vector({1, 2}));
  Tape t;
  const Var loss = t.sum(t.param(x));
  t.backward(loss);
  CHECK(t.consumed());
  CHECK_THROWS_AS(t.backward(loss), ContractError);
}

TEST_CASE("gradients from separate tapes accumulate") {
  Tensor x = trainable(Tensor::vector({1, 2}));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(t.sum(t.param(x)));
  }
  for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("forward is deterministic") {
  Rng rng(4);
  const Tensor x = random_tensor({4, 3}, rng), w = random_tensor({3, 2}, rng);
  Tape a, b;
  CHECK(a.value(a.relu(a.linear(a.constant(x), a.constant(w))))
            .same_values(b.value(b.relu(b.linear(b.constant(x), b.constant(w))))));
}

TEST_CASE("non-finite values are rejected") {
  Tape t;
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(t.constant(Tensor::vector({1.0, inf})), NumericError);
  const Var big = t.constant(Tensor::vector({1e200}));
  CHECK_THROWS_AS(t.mul(big, big), NumericError);
  CHECK_THROWS_AS(t.sqrt(t.constant(Tensor::vector({-1.0}))), NumericError);
}

TEST_CASE("backward needs a scalar loss") {
  Tensor x = trainable(Tensor::vector({1, 2}));
  Tape t;
  CHECK_THROWS_AS(t.backward(t.param(x)), ContractError);
}

TEST_CASE("param() needs a trainable tensor") {
  Tensor x = Tensor::vector({1, 2});
  Tape t;
  CHECK_THROWS_AS(t.param(x), ContractError);
}

TEST_CASE("tensor shape invariant") {
  CHECK_THROWS(Tensor(Shape{2, 3}, std::vector<double>(5)));
  Tensor t(Shape{2, 3});
  CHECK(t.size() == 6);
  t.set_trainable(true);
  t.accumulate_grad(std::vector<double>(6, 1.0));
  CHECK(t.grad().size() == t.size());
}

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits give ln N") {
    Tape t;
    const std::vector<std::size_t> labels{0, 3};
    const double v = t.value(t.cross_entropy(t.constant(Tensor(Shape{2, 5}, 0.7)), labels)).item();
    CHECK(v == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  }
  SUBCASE("confident correct logits give nearly zero") {
    Tape t;
    const std::vector<std::size_t> labels{1};
    const double v =
        t.value(t.cross_entropy(t.constant(Tensor::matrix(1, 3, {0, 60, 0})), labels)).item();
    CHECK(v < 1e-20);
  }
  SUBCASE("random logits match the log-sum-exp oracle") {
    Rng rng(5);
    const Tensor logits = random_tensor({7, 9}, rng, 4.0);
    std::vector<std::size_t> labels;
    for (int i = 0; i < 7; ++i) labels.push_back(rng.below(9));
    Tape t;
    const double v = t.value(t.cross_entropy(t.constant(logits), labels)).item();
    CHECK(std::abs(v - oracle::cross_entropy(logits, labels)) <= 1e-10);
  }
  SUBCASE("label outside the classifier") {
    Tape t;
    const std::vector<std::size_t> labels{4};
    CHECK_THROWS_AS(t.cross_entropy(t.constant(Tensor(Shape{1, 3})), labels), IndexError);
  }
}

TEST_CASE("batch-hard triplet loss") {
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  SUBCASE("well separated tight clusters give zero") {
    Tape t;
    const Tensor e = Tensor::matrix(4, 2, {0, 0, 0, 0, 1, 0, 1, 0});
    CHECK(t.value(t.batch_hard_triplet(t.constant(e), labels, 0.3)).item() == 0.0);
  }
  SUBCASE("identical embeddings give the margin") {
    Tape t;
    const Tensor e(Shape{4, 3}, 0.25);
    CHECK(t.value(t.batch_hard_triplet(t.constant(e), labels, 0.3)).item() ==
          doctest::Approx(0.3).epsilon(1e-14));
  }
  SUBCASE("random batches match the all-pairs oracle") {
    Rng rng(6);
    for (int rep = 0; rep < 20; ++rep) {
      const Tensor e = random_tensor({8, 5}, rng);
      const std::vector<std::size_t> l{0, 1, 2, 3, 0, 1, 2, 3};
      Tape t;
      const double v = t.value(t.batch_hard_triplet(t.constant(e), l, 0.3)).item();
      CHECK(std::abs(v - oracle::batch_hard_triplet(e, l, 0.3)) <= 1e-10);
    }
  }
  SUBCASE("invariant under batch permutation") {
    Rng rng(7);
    const Tensor e = random_tensor({6, 4}, rng);
    const std::vector<std::size_t> l{0, 1, 2, 0, 1, 2};
    const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
    Tensor ep(Shape{6, 4});
    std::vector<std::size_t> lp;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 4; ++j) ep.at(i, j) = e.at(perm[i], j);
      lp.push_back(l[perm[i]]);
    }
    Tape t;
    const double a = t.value(t.batch_hard_triplet(t.constant(e), l, 0.3)).item();
    const double b = t.value(t.batch_hard_triplet(t.constant(ep), lp, 0.3)).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
  }
  SUBCASE("identity without a positive is a contract error") {
    Tape t;
    const std::vector<std::size_t> l{0, 0, 1};
    CHECK_THROWS_AS(t.batch_hard_triplet(t.constant(Tensor(Shape{3, 2})), l, 0.3), ContractError);
  }
}

TEST_CASE("sgd step arithmetic") {
  auto run = [](double p, double g, double lr, double wd) {
    Tensor t = trainable(Tensor::vector({p}));
    t.accumulate_grad(std::vector<double>{g});
    Tensor* ps[] = {&t};
    sgd_step(ps, lr, wd);
    CHECK_FALSE(t.has_grad());
    return t[0];
  };
  CHECK(run(1.0, 1.0, 0.1, 0.0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(run(1.5, 0.0, 0.1, 0.0) == 1.5);
  CHECK(run(2.0, 0.0, 0.1, 0.5) == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("sgd grad_scale multiplies the gradient only") {
  Tensor t = trainable(Tensor::vector({2.0}));
  t.accumulate_grad(std::vector<double>{1.0});
  const ParamGroup groups[] = {{{&t}, 3.0}};
  sgd_step(groups, 0.1, 0.5);
  CHECK(t[0] == doctest::Approx(2.0 - 0.1 * (3.0 + 0.5 * 2.0)).epsilon(1e-15));
}

TEST_CASE("sgd preconditions") {
  Tensor t = trainable(Tensor::vector({1.0}));
  Tensor* ps[] = {&t};
  CHECK_THROWS_AS(sgd_step(ps, 0.1, 0.0), ContractError);  // no gradient
  t.accumulate_grad(std::vector<double>{1.0});
  CHECK_THROWS_AS(sgd_step(ps, 0.0, 0.0), ContractError);
  CHECK_THROWS_AS(sgd_step(ps, 0.1, -1.0), ContractError);
}
