#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fedsim/autodiff.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optim.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

ClientShard random_shard(SeededRng& rng, std::size_t n, std::size_t d, std::size_t classes) {
  ClientShard s;
  s.client_id = "c";
  s.features = rand_normal(rng, {n, d}, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(int(rng.uniform_index(classes)));
    s.sample_ids.push_back(i);
  }
  return s;
}

ModelSpec logistic(std::size_t d, std::size_t c = 2) {
  ModelSpec s;
  s.input_dim = d;
  s.num_classes = c;
  return s;
}

}  // namespace

TEST_CASE("spec invariants") {
  auto s = logistic(3);
  s.num_classes = 4;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = logistic(3);
  s.fusion_weight = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = logistic(3);
  s.hidden_dim = 6;
  s.use_attention = true;  // 6 is not a multiple of token_dim 4
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("params pack/unpack round trip and serialization") {
  ModelSpec spec = logistic(5, 3);
  spec.hidden_dim = 8;
  spec.use_attention = true;
  SeededRng rng(1);
  const auto p = init_params(spec, rng);
  std::size_t total = 0;
  for (const auto& item : p.layout()) total += shape_size(item.shape);
  CHECK(p.size() == total);
  CHECK(ModelParams::pack(p.layout(), p.unpack()) == p);

  std::stringstream ss;
  write_params(ss, p);
  CHECK(read_params(ss) == p);

  CHECK_THROWS(ModelParams(p.layout(), Tensor({total + 1})));
}

TEST_CASE("forward examples") {
  SeededRng rng(2);
  for (const Fusion f : {Fusion::none, Fusion::feature, Fusion::probability}) {
    ModelSpec spec = logistic(4, 3);
    spec.hidden_dim = 8;
    spec.use_attention = true;
    spec.fusion = f;
    const auto x = rand_normal(rng, {5, 4}, 0, 1);
    std::optional<Tensor> x2;
    if (f != Fusion::none) x2 = rand_normal(rng, {5, 4}, 0, 1);
    const auto probs = forward(spec, zero_params(spec), x, x2);
    for (double v : probs.data()) CHECK(std::fabs(v - 1.0 / 3) < 1e-15);
  }

  ModelSpec spec = logistic(3);
  spec.fusion = Fusion::feature;
  CHECK_THROWS_AS(forward(spec, zero_params(spec), Tensor({2, 3})), ConfigError);
  spec.fusion = Fusion::none;
  CHECK_THROWS_AS(forward(spec, zero_params(spec), Tensor({2, 3}), Tensor({2, 3})), ConfigError);
}

TEST_CASE("probability fusion with weight one equals branch one") {
  SeededRng rng(3);
  ModelSpec spec = logistic(4, 3);
  spec.hidden_dim = 4;
  spec.fusion = Fusion::probability;
  spec.fusion_weight = 1.0;
  const auto params = init_params(spec, rng);
  const auto x = rand_normal(rng, {6, 4}, 0, 1), x2 = rand_normal(rng, {6, 4}, 0, 1);

  ModelSpec single = spec;
  single.fusion = Fusion::none;
  auto branch = zero_params(single);
  for (const auto& item : branch.layout()) branch.set(item.name, params.get("branch1." + item.name));
  CHECK(forward(spec, params, x, x2) == forward(single, branch, x));
}

TEST_CASE("mix arithmetic") {
  ad::Tape tape;
  const auto p1 = tape.constant(Tensor::matrix({{1, 0}}));
  const auto p2 = tape.constant(Tensor::matrix({{0, 1}}));
  CHECK(tape.value(tape.mix(p1, p2, 0.5)) == Tensor::matrix({{0.5, 0.5}}));
}

TEST_CASE("probability rows sum to one") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto c = oracle::random_model_case(seed);
    const auto probs = forward(c.spec, c.params, c.batch.x, c.batch.x2);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < probs.cols(); ++j) s += probs(i, j);
      CHECK(std::fabs(s - 1) < 1e-12);
    }
  }
}

TEST_CASE("loss_ce examples") {
  const std::vector<int> y{0, 1, 1};
  CHECK(loss_ce(Tensor::matrix({{1, 0}, {0, 1}, {0, 1}}), y) == 0.0);
  CHECK(std::fabs(loss_ce(Tensor::matrix({{0.5, 0.5}}), std::vector<int>{1}) - std::log(2.0)) < 1e-15);

  const auto p = Tensor::matrix({{0.2, 0.8}, {0.6, 0.4}, {0.9, 0.1}});
  const double hand = (-std::log(0.2) - std::log(0.4) - std::log(0.1)) / 3.0;
  CHECK(std::fabs(loss_ce(p, y) - hand) < 1e-15);

  // Zero probability on the label is clamped rather than infinite.
  CHECK(loss_ce(Tensor::matrix({{1, 0}}), std::vector<int>{1}) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(loss_ce(p, std::vector<int>{0, 2, 1}), DataError);
}

TEST_CASE("loss_prox examples") {
  const std::vector<LayoutItem> layout{{"w", {2}}};
  const ModelParams w(layout, Tensor::vector({1, 1})), g(layout, Tensor::vector({0, 0}));
  CHECK(loss_prox(1.0, w, g, 2.0) == 3.0);
  CHECK(loss_prox(0.75, w, g, 0.0) == 0.75);

  SeededRng rng(4);
  const std::vector<LayoutItem> big{{"a", {3, 4}}, {"b", {5}}};
  const ModelParams a(big, rand_normal(rng, {17}, 0, 1)), b(big, rand_normal(rng, {17}, 0, 1));
  double ss = 0;
  for (std::size_t i = 0; i < 17; ++i) ss += (a.flat()[i] - b.flat()[i]) * (a.flat()[i] - b.flat()[i]);
  CHECK(std::fabs(loss_prox(0.5, a, b, 0.3) - (0.5 + 0.15 * ss)) < 1e-14);

  const ModelParams other({{"w", {3}}}, Tensor::vector({0, 0, 0}));
  CHECK_THROWS_AS(loss_prox(1.0, w, other, 1.0), ConfigError);
  CHECK_THROWS_AS(loss_prox(1.0, w, g, -1.0), ConfigError);
}

TEST_CASE("grad: proximal term vanishes at the anchor") {
  auto c = oracle::random_model_case(7);
  const auto plain = grad(c.spec, c.params, c.batch);
  const auto anchored = grad(c.spec, c.params, c.batch, &c.params, 0.7);
  CHECK(plain == anchored);
}

TEST_CASE("grad: logistic closed form") {
  SeededRng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t d = 1 + rng.uniform_index(5), c = 2 + rng.uniform_index(2);
    const auto spec = logistic(d, c);
    auto params = init_params(spec, rng);
    params.set("head.b", rand_normal(rng, {c}, 0, 1));
    Batch b;
    b.x = rand_normal(rng, {1, d}, 0, 1);
    b.labels = {int(rng.uniform_index(c))};
    const auto p = forward(spec, params, b.x);
    const auto g = grad(spec, params, b);
    const auto gw = g.get("head.W"), gb = g.get("head.b");
    for (std::size_t j = 0; j < c; ++j) {
      const double r = p(0, j) - (int(j) == b.labels[0] ? 1.0 : 0.0);
      CHECK(std::fabs(gb[j] - r) < 1e-14);
      for (std::size_t i = 0; i < d; ++i) CHECK(std::fabs(gw(i, j) - r * b.x(0, i)) < 1e-14);
    }
  }
}

TEST_CASE("grad matches central finite differences") {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    auto c = oracle::random_model_case(seed);
    const ModelParams* gw = c.global_w ? &*c.global_w : nullptr;
    const auto g = grad(c.spec, c.params, c.batch, gw, c.mu);
    const auto chk = oracle::finite_difference_check(c.spec, c.params, c.batch, gw, c.mu, g);
    CAPTURE(seed);
    CHECK(chk.max_rel < 1e-4);
    CHECK(chk.max_abs_small < 1e-8);
  }
}

TEST_CASE("attention model stays finite and differentiable") {
  ModelSpec spec = logistic(6, 3);
  spec.hidden_dim = 16;
  spec.use_attention = true;
  SeededRng rng(6);
  auto params = init_params(spec, rng);
  Batch b;
  b.x = rand_normal(rng, {7, 6}, 0, 10);
  for (int i = 0; i < 7; ++i) b.labels.push_back(i % 3);
  CHECK(forward(spec, params, b.x).all_finite());
  const auto g = grad(spec, params, b);
  CHECK(g.flat().all_finite());
  const auto chk = oracle::finite_difference_check(spec, params, b, nullptr, 0.0, g);
  CHECK(chk.max_rel < 1e-4);
}

TEST_CASE("train_local examples") {
  SeededRng data_rng(7);
  const auto shard = random_shard(data_rng, 13, 4, 2);
  ModelSpec spec = logistic(4);
  spec.hidden_dim = 4;
  SeededRng init_rng(8);
  const auto w0 = init_params(spec, init_rng);

  OptimizerConfig opt;
  opt.kind = OptimizerKind::sgd;
  opt.lr = 0.0;
  opt.epochs = 3;
  opt.batch_size = 4;
  SeededRng r0(1);
  CHECK(train_local(spec, w0, shard, opt, nullptr, 0.0, r0) == w0);

  opt.lr = 0.05;
  opt.epochs = 1;
  opt.batch_size = 64;
  SeededRng r1(1);
  const auto stepped = train_local(spec, w0, shard, opt, nullptr, 0.0, r1);
  const auto g = grad(spec, w0, shard.full_batch());
  Tensor expect = w0.flat();
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] -= 0.05 * g.flat()[i];
  CHECK(stepped.flat() == expect);

  opt.kind = OptimizerKind::adamw;
  opt.batch_size = 3;
  opt.epochs = 4;
  SeededRng a(99), b(99);
  CHECK(train_local(spec, w0, shard, opt, &w0, 0.1, a) == train_local(spec, w0, shard, opt, &w0, 0.1, b));

  ClientShard empty;
  empty.client_id = "e";
  empty.features = Tensor({0, 4});
  SeededRng r2(1);
  CHECK_THROWS_AS(train_local(spec, w0, empty, opt, nullptr, 0.0, r2), DataError);
}

TEST_CASE("adamw first step follows the decoupled recurrence") {
  SeededRng data_rng(9);
  const auto shard = random_shard(data_rng, 6, 3, 2);
  const auto spec = logistic(3);
  SeededRng init_rng(10);
  const auto w0 = init_params(spec, init_rng);
  OptimizerConfig opt;
  opt.kind = OptimizerKind::adamw;
  opt.lr = 0.01;
  opt.weight_decay = 0.05;
  opt.batch_size = 6;
  SeededRng r(3);
  const auto w1 = train_local(spec, w0, shard, opt, nullptr, 0.0, r);
  const auto g = grad(spec, w0, shard.full_batch());
  for (std::size_t i = 0; i < w0.size(); ++i) {
    const double gi = g.flat()[i];
    const double m_hat = (1 - 0.9) * gi / (1 - 0.9);
    const double v_hat = (1 - 0.999) * gi * gi / (1 - 0.999);
    double w = w0.flat()[i];
    w -= 0.01 * 0.05 * w;
    w -= 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(std::fabs(w1.flat()[i] - w) < 1e-15);
  }
}

TEST_CASE("lr schedule") {
  OptimizerConfig opt;
  opt.lr = 1e-3;
  CHECK(opt.lr_at(0) == 1e-3);
  CHECK(opt.lr_at(29) == 1e-3);
  CHECK(opt.lr_at(30) == doctest::Approx(1e-4));
  CHECK(opt.lr_at(65) == doctest::Approx(1e-5));
  opt.lr_decay_factor = 0.0;
  CHECK_THROWS_AS(opt.validate(), ConfigError);
}

TEST_CASE("proximal pull is monotone on the convex model") {
  const auto spec = logistic(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng data_rng(seed);
    const auto shard = random_shard(data_rng, 24, 5, 2);
    SeededRng init_rng(seed + 1000);
    const auto anchor = init_params(spec, init_rng);
    OptimizerConfig opt;
    opt.kind = OptimizerKind::sgd;
    opt.lr = 0.1;
    opt.batch_size = 8;
    opt.epochs = 5;
    double prev = INFINITY;
    for (double mu : {0.0, 0.005, 0.1, 0.3, 1.0}) {
      SeededRng r(seed + 7);
      const auto w = train_local(spec, anchor, shard, opt, &anchor, mu, r);
      const double dist = std::sqrt(squared_distance(w, anchor));
      CAPTURE(seed);
      CAPTURE(mu);
      CHECK(dist <= prev);
      prev = dist;
    }
  }
}
