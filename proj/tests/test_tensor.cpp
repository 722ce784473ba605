#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

using namespace fedsim;

TEST_CASE("matmul examples") {
  const auto a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{0, 1}, {1, 0}})) ==
        Tensor::matrix({{0, 1}, {1, 0}}));
  OpCounter ops;
  const auto r = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}), &ops);
  CHECK(r == Tensor::matrix({{11}}));
  CHECK(ops.multiplies == 2);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    (void)matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul counts m*k*n multiplies") {
  OpCounter ops;
  (void)matmul(Tensor({3, 5}, 1.0), Tensor({5, 7}, 1.0), &ops);
  CHECK(ops.multiplies == 105);
}

TEST_CASE("matmul associativity") {
  SeededRng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = 1 + rng.uniform_index(6), k = 1 + rng.uniform_index(6), n = 1 + rng.uniform_index(6),
                      p = 1 + rng.uniform_index(6);
    const auto a = rand_normal(rng, {m, k}, 0, 1), b = rand_normal(rng, {k, n}, 0, 1),
               c = rand_normal(rng, {n, p}, 0, 1);
    const auto l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) {
      CHECK(std::fabs(l[i] - r[i]) <= 1e-9 * std::max(1.0, std::fabs(l[i])));
    }
  }
}

TEST_CASE("softmax examples") {
  const auto u = softmax(Tensor::vector({0, 0, 0}), 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const double c = 12.5;
  const auto s = softmax(Tensor::vector({c, c + 1000}), 0);
  CHECK(s.all_finite());
  CHECK(s[0] < 1e-300);
  CHECK(s[1] == 1.0);

  const auto l = softmax(Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  CHECK(std::fabs(l[0] - 1.0 / 6) < 1e-15);
  CHECK(std::fabs(l[1] - 2.0 / 6) < 1e-15);
  CHECK(std::fabs(l[2] - 3.0 / 6) < 1e-15);
}

TEST_CASE("softmax slices sum to one, both axes") {
  SeededRng rng(11);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t r = 1 + rng.uniform_index(5), c = 1 + rng.uniform_index(5);
    const double mag = rep % 2 ? 1e3 : 1.0;
    const auto x = rand_normal(rng, {r, c}, 0, mag);
    const auto row = softmax(x, 1), col = softmax(x, 0);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(row(i, j) >= 0.0);
        s += row(i, j);
      }
      CHECK(std::fabs(s - 1) < 1e-12);
    }
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < r; ++i) s += col(i, j);
      CHECK(std::fabs(s - 1) < 1e-12);
    }
  }
}

TEST_CASE("softmax errors") {
  CHECK_THROWS_AS(softmax(Tensor::vector({1.0, NAN}), 0), NumericError);
  CHECK_THROWS_AS(softmax(Tensor::vector({1.0, INFINITY}), 0), NumericError);
  CHECK_THROWS_AS(softmax(Tensor::vector({1.0}), 1), DimensionError);
}

TEST_CASE("rand_normal") {
  SeededRng a(42), b(42);
  CHECK(rand_normal(a, {3, 4}, 0.5, 2.0) == rand_normal(b, {3, 4}, 0.5, 2.0));

  SeededRng z(1);
  const auto flat = rand_normal(z, {10}, 3.25, 0.0);
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == 3.25);

  SeededRng big(2024);
  const auto t = rand_normal(big, {100000}, 0.0, 1.0);
  double s = 0.0;
  for (double v : t.data()) s += v;
  CHECK(std::fabs(s / 1e5) < 0.02);

  SeededRng e(0);
  CHECK_THROWS_AS(rand_normal(e, {2}, 0, -1), ConfigError);
}

TEST_CASE("rng stream is frozen") {
  // First outputs of seed 0, computed with an independent reference of the
  // generator family (splitmix64 seeding into xoshiro256**).
  auto splitmix = [](std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  std::uint64_t sm = 0, s[4];
  for (auto& w : s) w = splitmix(sm);
  SeededRng rng(0);
  for (int i = 0; i < 8; ++i) {
    const std::uint64_t expect = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    CHECK(rng.next_u64() == expect);
  }
}

TEST_CASE("shuffle is a deterministic permutation") {
  std::vector<int> a(50), b(50);
  for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
  SeededRng r1(9), r2(9);
  r1.shuffle(std::span<int>(a));
  r2.shuffle(std::span<int>(b));
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("derive_seed separates tags and indices") {
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "b", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a", 0) != derive_seed(2, "a", 0));
  CHECK(derive_seed(5, "NYU", 3) == derive_seed(5, "NYU", 3));
}

TEST_CASE("tensor binary container round trip") {
  SeededRng rng(5);
  const auto t = rand_normal(rng, {3, 4}, 0, 1);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "FCT1");
  CHECK(bytes.size() == 4 + 4 + 2 * 4 + 12 * 8);
  // Little-endian rank.
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(read_tensor(ss) == t);

  std::stringstream bad("FCT0xxxx");
  CHECK_THROWS_AS(read_tensor(bad), DataError);
}

TEST_CASE("operations are bitwise repeatable") {
  SeededRng a(77), b(77);
  const auto x1 = rand_normal(a, {8, 8}, 0, 1), x2 = rand_normal(b, {8, 8}, 0, 1);
  const auto r1 = softmax(matmul(x1, transpose(x1)), 1);
  const auto r2 = softmax(matmul(x2, transpose(x2)), 1);
  CHECK(r1 == r2);
}

TEST_CASE("shape invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(add(Tensor({2, 2}), Tensor({2, 3})), DimensionError);
}
