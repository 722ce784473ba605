#pragma once

#include <cstdint>

#include "fedsim/tensor.hpp"

namespace fedsim::attention {

// Projection parameters of one self-attention layer over d-wide tokens.
struct AttentionParams {
  Tensor w_q, w_k, w_v;  // [d x d]
  Tensor b_q, b_k, b_v;  // [d]

  std::size_t dim() const { return w_q.rows(); }
  // Throws DimensionError unless all six tensors agree on d, NumericError on
  // non-finite entries.
  void validate() const;

  static AttentionParams identity(std::size_t d);
  static AttentionParams random(std::size_t d, SeededRng& rng, double stddev = 1.0);
};

struct Projections {
  Tensor q, k, v;
};

struct AttentionOutput {
  Tensor values;  // same shape as the inputs
  std::uint64_t multiply_count = 0;
};

// Q = xW_Q + b_Q, K = xW_K + b_K, V = xW_V + b_V.
Projections project_qkv(const Tensor& x, const AttentionParams& p);

// A_i = sum_j softmax_j(Q_i . K_j / sqrt(d)) V_j.
AttentionOutput standard_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Row-wise softmax of queries: phi(Q).
Tensor query_feature_map(const Tensor& q);
// Softmax of keys over the token axis, per feature column: rho(K).
Tensor key_feature_map(const Tensor& k);

// A'_i = phi(Q_i) [sum_j rho(K_j)^T V_j], with the d x d summary formed once.
AttentionOutput linear_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Implicit attention mass sum_j phi(Q_i) rho(K_j)^T for every query row.
Tensor attention_mass(const Tensor& q, const Tensor& k);

}  // namespace fedsim::attention
