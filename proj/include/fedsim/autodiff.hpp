#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim::ad {

// Handle to a node on a Tape.
struct Var {
  std::size_t id;
};

// Minimal reverse-mode tape over rank-2 tensors. Nodes are appended in
// evaluation order; backward() walks them in reverse, so every op only needs
// its local vector-Jacobian product.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(out)/d(out) = 1 for a [1 x 1] output and propagates.
  void backward(Var out);

  Var matmul(Var a, Var b);
  // x[R x C] + bias[C] (bias stored as [1 x C] or [C]).
  Var add_row_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var tanh(Var x);
  Var softmax_rows(Var x);
  // Softmax down each column, independently within consecutive blocks of
  // group_rows rows.
  Var softmax_cols_grouped(Var x, std::size_t group_rows);
  // Per-block product over `batches` equal row blocks of a and b:
  //   transpose_a: out_b = a_b^T b_b,  otherwise out_b = a_b b_b.
  Var batched_matmul(Var a, Var b, std::size_t batches, bool transpose_a);
  // Mean over each block of group_rows consecutive rows.
  Var group_mean_rows(Var x, std::size_t group_rows);
  Var reshape(Var x, Shape shape);
  Var concat_cols(Var a, Var b);
  // w * a + (1 - w) * b
  Var mix(Var a, Var b, double w);
  // Mean over rows of -log(max(probs[i, labels[i]], clamp)); [1 x 1] output.
  Var nll_mean(Var probs, std::span<const int> labels, double clamp);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Tensor& g(Var v) { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace fedsim::ad
