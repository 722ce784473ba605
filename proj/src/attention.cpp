#include "fedsim/attention.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim::attention {

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor* v) {
  if (q.rank() != 2 || k.rank() != 2 || (v && v->rank() != 2)) {
    throw DimensionError("attention inputs must be matrices");
  }
  if (q.shape() != k.shape() || (v && v->shape() != q.shape())) {
    throw DimensionError("attention shape mismatch: Q" + shape_string(q.shape()) + " K" +
                         shape_string(k.shape()) +
                         (v ? " V" + shape_string(v->shape()) : std::string()));
  }
  if (q.rows() == 0 || q.cols() == 0) {
    throw DataError("attention over empty input " + shape_string(q.shape()));
  }
}

}  // namespace

void AttentionParams::validate() const {
  const std::size_t d = w_q.rank() == 2 ? w_q.rows() : 0;
  const Shape square{d, d};
  const Shape vec{d};
  if (w_q.shape() != square || w_k.shape() != square || w_v.shape() != square ||
      b_q.shape() != vec || b_k.shape() != vec || b_v.shape() != vec) {
    throw DimensionError("attention parameters disagree on d");
  }
  for (const Tensor* t : {&w_q, &w_k, &w_v, &b_q, &b_k, &b_v}) {
    if (!t->all_finite()) throw NumericError("attention parameters contain non-finite values");
  }
}

AttentionParams AttentionParams::identity(std::size_t d) {
  return {Tensor::identity(d), Tensor::identity(d), Tensor::identity(d),
          Tensor({d}),         Tensor({d}),         Tensor({d})};
}

AttentionParams AttentionParams::random(std::size_t d, SeededRng& rng, double stddev) {
  AttentionParams p;
  p.w_q = rand_normal(rng, {d, d}, 0.0, stddev);
  p.w_k = rand_normal(rng, {d, d}, 0.0, stddev);
  p.w_v = rand_normal(rng, {d, d}, 0.0, stddev);
  p.b_q = rand_normal(rng, {d}, 0.0, stddev);
  p.b_k = rand_normal(rng, {d}, 0.0, stddev);
  p.b_v = rand_normal(rng, {d}, 0.0, stddev);
  return p;
}

Projections project_qkv(const Tensor& x, const AttentionParams& p) {
  p.validate();
  if (x.rank() != 2 || x.cols() != p.dim()) {
    throw DimensionError("project_qkv: input " + shape_string(x.shape()) +
                         " does not match d=" + std::to_string(p.dim()));
  }
  return {add_row_bias(matmul(x, p.w_q), p.b_q), add_row_bias(matmul(x, p.w_k), p.b_k),
          add_row_bias(matmul(x, p.w_v), p.b_v)};
}

AttentionOutput standard_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, &v);
  const std::size_t n = q.rows(), d = q.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  // Reductions over keys add their terms in sorted order, so permuting the
  // key/value rows cannot change a single bit of the result. The 1/sqrt(d)
  // scale is not a matmul product and is left out of the count.
  auto sorted_sum = [](std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
  };
  Tensor values({n, d});
  std::vector<double> logits(n), terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      logits[j] = dot * inv_sqrt_d;
    }
    if (!std::all_of(logits.begin(), logits.end(), [](double x) { return std::isfinite(x); })) {
      throw NumericError("standard_attention: non-finite similarity");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    for (std::size_t j = 0; j < n; ++j) logits[j] = std::exp(logits[j] - mx);
    terms = logits;
    const double denom = sorted_sum(terms);
    for (std::size_t j = 0; j < n; ++j) logits[j] /= denom;
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t j = 0; j < n; ++j) terms[j] = logits[j] * v(j, c);
      values(i, c) = sorted_sum(terms);
    }
  }
  return {std::move(values), 2 * d * n * n};
}

Tensor query_feature_map(const Tensor& q) { return softmax(q, 1); }

Tensor key_feature_map(const Tensor& k) { return softmax(k, 0); }

AttentionOutput linear_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, &v);
  OpCounter counter;
  Tensor phi = query_feature_map(q);
  Tensor rho = key_feature_map(k);
  Tensor summary = matmul(transpose(rho), v, &counter);  // [d x d]
  Tensor values = matmul(phi, summary, &counter);
  return {std::move(values), counter.multiplies};
}

Tensor attention_mass(const Tensor& q, const Tensor& k) {
  check_qkv(q, k, nullptr);
  Tensor phi = query_feature_map(q);
  Tensor rho = key_feature_map(k);
  const std::size_t n = q.rows(), d = q.cols();
  Tensor key_mass({d});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) key_mass[c] += rho(j, c);
  Tensor mass({n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) mass[i] += phi(i, c) * key_mass[c];
  return mass;
}

}  // namespace fedsim::attention
