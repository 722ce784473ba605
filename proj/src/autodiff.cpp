#include "fedsim/autodiff.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim::ad {

namespace {

// Block views for batched_matmul: rows [b*r, (b+1)*r) of a [B*r x c] matrix.
inline double at(const Tensor& t, std::size_t block, std::size_t block_rows, std::size_t r,
                 std::size_t c) {
  return t(block * block_rows + r, c);
}

}  // namespace

Var Tape::push(Tensor value, bool needs_grad) {
  Node n;
  n.grad = Tensor(value.shape());
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), true); }

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw DimensionError("backward: output must be a scalar");
  for (auto& n : nodes_) n.grad = Tensor(n.value.shape());
  nodes_[out.id].grad[0] = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].needs_grad && nodes_[i].backward) nodes_[i].backward();
  }
}

Var Tape::matmul(Var a, Var b) {
  Var out = push(fedsim::matmul(value(a), value(b)), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Tensor& go = grad(out);
    if (needs(a)) g(a) = fedsim::add(g(a), fedsim::matmul(go, transpose(value(b))));
    if (needs(b)) g(b) = fedsim::add(g(b), fedsim::matmul(transpose(value(a)), go));
  };
  return out;
}

Var Tape::add_row_bias(Var x, Var bias) {
  const Tensor& bv = value(bias);
  Var out = push(fedsim::add_row_bias(value(x), bv.reshaped({bv.size()})),
                 needs(x) || needs(bias));
  nodes_[out.id].backward = [this, x, bias, out] {
    const Tensor& go = grad(out);
    if (needs(x)) g(x) = fedsim::add(g(x), go);
    if (needs(bias)) {
      Tensor& gb = g(bias);
      const std::size_t c = go.cols();
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += go(i, j);
    }
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(fedsim::add(value(a), value(b)), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    if (needs(a)) g(a) = fedsim::add(g(a), grad(out));
    if (needs(b)) g(b) = fedsim::add(g(b), grad(out));
  };
  return out;
}

Var Tape::tanh(Var x) {
  Tensor y = value(x);
  for (auto& v : y.data()) v = std::tanh(v);
  Var out = push(std::move(y), needs(x));
  nodes_[out.id].backward = [this, x, out] {
    const Tensor& yv = value(out);
    const Tensor& go = grad(out);
    Tensor& gx = g(x);
    for (std::size_t i = 0; i < yv.size(); ++i) gx[i] += go[i] * (1.0 - yv[i] * yv[i]);
  };
  return out;
}

Var Tape::softmax_rows(Var x) {
  Var out = push(softmax(value(x), 1), needs(x));
  nodes_[out.id].backward = [this, x, out] {
    const Tensor& y = value(out);
    const Tensor& go = grad(out);
    Tensor& gx = g(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += go(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (go(i, j) - dot);
    }
  };
  return out;
}

Var Tape::softmax_cols_grouped(Var x, std::size_t group_rows) {
  const Tensor& xv = value(x);
  if (group_rows == 0 || xv.rows() % group_rows != 0) {
    throw DimensionError("softmax_cols_grouped: rows not divisible by group size");
  }
  const std::size_t groups = xv.rows() / group_rows;
  Tensor y = xv.reshaped({groups, group_rows, xv.cols()});
  y = softmax(y, 1).reshaped(xv.shape());
  Var out = push(std::move(y), needs(x));
  nodes_[out.id].backward = [this, x, out, group_rows, groups] {
    const Tensor& yv = value(out);
    const Tensor& go = grad(out);
    Tensor& gx = g(x);
    for (std::size_t b = 0; b < groups; ++b) {
      for (std::size_t c = 0; c < yv.cols(); ++c) {
        double dot = 0.0;
        for (std::size_t r = 0; r < group_rows; ++r) {
          const std::size_t i = b * group_rows + r;
          dot += go(i, c) * yv(i, c);
        }
        for (std::size_t r = 0; r < group_rows; ++r) {
          const std::size_t i = b * group_rows + r;
          gx(i, c) += yv(i, c) * (go(i, c) - dot);
        }
      }
    }
  };
  return out;
}

Var Tape::batched_matmul(Var a, Var b, std::size_t batches, bool transpose_a) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (batches == 0 || av.rows() % batches != 0 || bv.rows() % batches != 0) {
    throw DimensionError("batched_matmul: rows not divisible by batch count");
  }
  const std::size_t ar = av.rows() / batches, ac = av.cols();
  const std::size_t br = bv.rows() / batches, bc = bv.cols();
  const std::size_t inner = transpose_a ? ar : ac;
  const std::size_t out_r = transpose_a ? ac : ar;
  if (inner != br) {
    throw DimensionError("batched_matmul inner mismatch: " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor y({batches * out_r, bc});
  for (std::size_t s = 0; s < batches; ++s) {
    for (std::size_t i = 0; i < out_r; ++i) {
      for (std::size_t p = 0; p < inner; ++p) {
        const double x = transpose_a ? at(av, s, ar, p, i) : at(av, s, ar, i, p);
        for (std::size_t j = 0; j < bc; ++j) y(s * out_r + i, j) += x * at(bv, s, br, p, j);
      }
    }
  }
  Var out = push(std::move(y), needs(a) || needs(b));
  nodes_[out.id].backward = [=, this] {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Tensor& G = grad(out);
    for (std::size_t s = 0; s < batches; ++s) {
      for (std::size_t i = 0; i < out_r; ++i) {
        for (std::size_t p = 0; p < inner; ++p) {
          double ga = 0.0;
          for (std::size_t j = 0; j < bc; ++j) ga += G(s * out_r + i, j) * at(B, s, br, p, j);
          if (needs(a)) {
            if (transpose_a) {
              g(a)(s * ar + p, i) += ga;
            } else {
              g(a)(s * ar + i, p) += ga;
            }
          }
          if (needs(b)) {
            const double x = transpose_a ? at(A, s, ar, p, i) : at(A, s, ar, i, p);
            for (std::size_t j = 0; j < bc; ++j) g(b)(s * br + p, j) += x * G(s * out_r + i, j);
          }
        }
      }
    }
  };
  return out;
}

Var Tape::group_mean_rows(Var x, std::size_t group_rows) {
  const Tensor& xv = value(x);
  if (group_rows == 0 || xv.rows() % group_rows != 0) {
    throw DimensionError("group_mean_rows: rows not divisible by group size");
  }
  const std::size_t groups = xv.rows() / group_rows, c = xv.cols();
  const double inv = 1.0 / static_cast<double>(group_rows);
  Tensor y({groups, c});
  for (std::size_t b = 0; b < groups; ++b) {
    for (std::size_t r = 0; r < group_rows; ++r)
      for (std::size_t j = 0; j < c; ++j) y(b, j) += xv(b * group_rows + r, j);
    for (std::size_t j = 0; j < c; ++j) y(b, j) *= inv;
  }
  Var out = push(std::move(y), needs(x));
  nodes_[out.id].backward = [this, x, out, group_rows, groups, c, inv] {
    const Tensor& go = grad(out);
    Tensor& gx = g(x);
    for (std::size_t b = 0; b < groups; ++b)
      for (std::size_t r = 0; r < group_rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gx(b * group_rows + r, j) += go(b, j) * inv;
  };
  return out;
}

Var Tape::reshape(Var x, Shape shape) {
  Var out = push(value(x).reshaped(std::move(shape)), needs(x));
  nodes_[out.id].backward = [this, x, out] {
    Tensor& gx = g(x);
    const Tensor& go = grad(out);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  };
  return out;
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols row mismatch: " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor y({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) y(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j) y(i, ca + j) = bv(i, j);
  }
  Var out = push(std::move(y), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out, r, ca, cb] {
    const Tensor& go = grad(out);
    for (std::size_t i = 0; i < r; ++i) {
      if (needs(a))
        for (std::size_t j = 0; j < ca; ++j) g(a)(i, j) += go(i, j);
      if (needs(b))
        for (std::size_t j = 0; j < cb; ++j) g(b)(i, j) += go(i, ca + j);
    }
  };
  return out;
}

Var Tape::mix(Var a, Var b, double w) {
  Tensor y = fedsim::add(scale(value(a), w), scale(value(b), 1.0 - w));
  Var out = push(std::move(y), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out, w] {
    if (needs(a)) g(a) = fedsim::add(g(a), scale(grad(out), w));
    if (needs(b)) g(b) = fedsim::add(g(b), scale(grad(out), 1.0 - w));
  };
  return out;
}

Var Tape::nll_mean(Var probs, std::span<const int> labels, double clamp) {
  const Tensor& p = value(probs);
  if (p.rows() != labels.size()) {
    throw DimensionError("nll_mean: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(p.rows()) + " rows");
  }
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= p.cols()) {
      throw DataError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(p.cols()) + " classes");
    }
    total -= std::log(std::max(p(i, y), clamp));
  }
  Var out = push(Tensor({1, 1}, {total / static_cast<double>(n)}), needs(probs));
  std::vector<int> ys(labels.begin(), labels.end());
  nodes_[out.id].backward = [this, probs, out, ys = std::move(ys), clamp] {
    const Tensor& pv = value(probs);
    Tensor& gp = g(probs);
    const double scale_out = grad(out)[0] / static_cast<double>(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double pi = pv(i, ys[i]);
      if (pi > clamp) gp(i, ys[i]) -= scale_out / pi;
    }
  };
  return out;
}

}  // namespace fedsim::ad
