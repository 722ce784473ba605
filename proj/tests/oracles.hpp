// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls the library routine it is checking.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <set>
#include <tuple>
#include <vector>

#include "fedsim/cohort.hpp"
#include "fedsim/data.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace oracle {

using fedsim::Tensor;

inline std::vector<double> softmax_vec(std::vector<double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (double& x : v) x /= s;
  return v;
}

// A'_i = sum_j (phi(Q_i) . rho(K_j)) V_j, evaluated pair by pair.
inline Tensor naive_linear_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t n = q.rows(), d = q.cols();
  std::vector<std::vector<double>> phi(n), rho(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(d);
    for (std::size_t c = 0; c < d; ++c) r[c] = q(i, c);
    phi[i] = softmax_vec(r);
  }
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) col[j] = k(j, c);
    col = softmax_vec(col);
    for (std::size_t j = 0; j < n; ++j) rho[j][c] = col[j];
  }
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sim = 0.0;
      for (std::size_t c = 0; c < d; ++c) sim += phi[i][c] * rho[j][c];
      for (std::size_t c = 0; c < d; ++c) out(i, c) += sim * v(j, c);
    }
  }
  return out;
}

inline Tensor naive_standard_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t n = q.rows(), d = q.cols();
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      s[j] = dot / std::sqrt(static_cast<double>(d));
    }
    s = softmax_vec(s);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) out(i, c) += s[j] * v(j, c);
  }
  return out;
}

// ---- masks ----------------------------------------------------------------

using Voxel = std::array<std::size_t, 3>;

inline std::set<Voxel> voxels_of(const fedsim::metrics::Mask3D& m) {
  std::set<Voxel> out;
  const auto& d = m.dims();
  for (std::size_t x = 0; x < d[0]; ++x)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t z = 0; z < d[2]; ++z)
        if (m.at(x, y, z)) out.insert({x, y, z});
  return out;
}

inline std::vector<Voxel> surface_of(const fedsim::metrics::Mask3D& m) {
  std::vector<Voxel> out;
  const auto& d = m.dims();
  const auto on = [&](long x, long y, long z) {
    if (x < 0 || y < 0 || z < 0 || x >= long(d[0]) || y >= long(d[1]) || z >= long(d[2])) return false;
    return m.at(std::size_t(x), std::size_t(y), std::size_t(z));
  };
  for (const auto& v : voxels_of(m)) {
    const long x = long(v[0]), y = long(v[1]), z = long(v[2]);
    if (!on(x - 1, y, z) || !on(x + 1, y, z) || !on(x, y - 1, z) || !on(x, y + 1, z) ||
        !on(x, y, z - 1) || !on(x, y, z + 1)) {
      out.push_back(v);
    }
  }
  return out;
}

inline std::vector<double> brute_directed(const fedsim::metrics::Mask3D& from,
                                          const fedsim::metrics::Mask3D& to) {
  const auto a = surface_of(from), b = surface_of(to);
  const auto& sp = from.spacing();
  std::vector<double> out;
  for (const auto& p : a) {
    double best = INFINITY;
    for (const auto& q : b) {
      double s = 0.0;
      for (int ax = 0; ax < 3; ++ax) {
        const double t = (double(p[ax]) - double(q[ax])) * sp[ax];
        s += t * t;
      }
      best = std::min(best, std::sqrt(s));
    }
    out.push_back(best);
  }
  return out;
}

struct SurfacePair {
  double hd95, assd;
};

inline SurfacePair brute_surface(const fedsim::metrics::Mask3D& p, const fedsim::metrics::Mask3D& g) {
  auto all = brute_directed(p, g);
  const auto back = brute_directed(g, p);
  all.insert(all.end(), back.begin(), back.end());
  std::sort(all.begin(), all.end());
  double sum = 0.0;
  for (double d : all) sum += d;
  const double pos = 0.95 * double(all.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const auto hi = std::min(lo + 1, all.size() - 1);
  const double hd95 = all[lo] + (pos - double(lo)) * (all[hi] - all[lo]);
  return {hd95, sum / double(all.size())};
}

struct OverlapCounts {
  std::size_t p, g, inter, uni;
};

inline OverlapCounts overlap_counts(const fedsim::metrics::Mask3D& p, const fedsim::metrics::Mask3D& g) {
  const auto a = voxels_of(p), b = voxels_of(g);
  std::vector<Voxel> i, u;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(i));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  return {a.size(), b.size(), i.size(), u.size()};
}

inline fedsim::metrics::Mask3D random_mask(fedsim::SeededRng& rng, std::array<std::size_t, 3> dims,
                                           std::array<double, 3> spacing, double density) {
  fedsim::metrics::Mask3D m(dims, spacing);
  // A random blob: a box plus salt noise so surfaces have holes and islands.
  std::array<std::size_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = rng.uniform_index(dims[a]);
    hi[a] = lo[a] + rng.uniform_index(dims[a] - lo[a]) + 1;
  }
  for (std::size_t x = 0; x < dims[0]; ++x)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t z = 0; z < dims[2]; ++z) {
        const bool in_box = x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2];
        const double u = rng.uniform();
        if ((in_box && u > density * 0.3) || (!in_box && u < density * 0.1)) m.set(x, y, z);
      }
  return m;
}

// ---- classification ---------------------------------------------------------

inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) num += 1.0;
      else if (s[i] == s[j]) num += 0.5;
    }
  }
  return num / double(pairs);
}

// ---- gradients ----------------------------------------------------------------

struct GradCheck {
  double max_rel = 0.0;   // over coordinates with |analytic| >= 1e-8
  double max_abs_small = 0.0;  // over coordinates with |analytic| < 1e-8
};

inline GradCheck finite_difference_check(const fedsim::ModelSpec& spec, const fedsim::ModelParams& params,
                                         const fedsim::Batch& batch, const fedsim::ModelParams* global_w,
                                         double mu, const fedsim::ModelParams& analytic, double h = 1e-5) {
  GradCheck out;
  const auto flat = params.flat();
  const auto g = analytic.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    Tensor plus = flat, minus = flat;
    plus[i] += h;
    minus[i] -= h;
    const double fp = fedsim::objective(spec, fedsim::ModelParams(params.layout(), plus), batch, global_w, mu);
    const double fm = fedsim::objective(spec, fedsim::ModelParams(params.layout(), minus), batch, global_w, mu);
    const double num = (fp - fm) / (2.0 * h);
    const double a = g[i];
    if (std::fabs(a) < 1e-8) {
      out.max_abs_small = std::max(out.max_abs_small, std::fabs(a - num));
    } else {
      out.max_rel = std::max(out.max_rel, std::fabs(a - num) / std::max(std::fabs(a), std::fabs(num)));
    }
  }
  return out;
}

struct RandomModelCase {
  fedsim::ModelSpec spec;
  fedsim::ModelParams params;
  fedsim::Batch batch;
  std::optional<fedsim::ModelParams> global_w;
  double mu = 0.0;
};

inline RandomModelCase random_model_case(std::uint64_t seed) {
  fedsim::SeededRng rng(seed);
  fedsim::ModelSpec spec;
  spec.input_dim = 2 + rng.uniform_index(5);
  spec.num_classes = 2 + rng.uniform_index(2);
  const std::size_t shape = rng.uniform_index(3);  // logistic, mlp, mlp+attention
  spec.hidden_dim = shape == 0 ? 0 : 4 * (1 + rng.uniform_index(2));
  spec.use_attention = shape == 2;
  spec.token_dim = 4;
  const std::size_t fusion = rng.uniform_index(3);
  spec.fusion = fusion == 0 ? fedsim::Fusion::none : fusion == 1 ? fedsim::Fusion::feature : fedsim::Fusion::probability;
  spec.input_dim2 = spec.fusion == fedsim::Fusion::none ? 0 : 2 + rng.uniform_index(4);
  spec.fusion_weight = rng.uniform();

  auto params = fedsim::init_params(spec, rng);
  auto flat = params.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += 0.3 * rng.normal();
  params = fedsim::ModelParams(params.layout(), flat);

  const std::size_t b = 1 + rng.uniform_index(6);
  fedsim::Batch batch;
  batch.x = fedsim::rand_normal(rng, {b, spec.input_dim}, 0.0, 1.0);
  if (spec.fusion != fedsim::Fusion::none) batch.x2 = fedsim::rand_normal(rng, {b, spec.second_input_dim()}, 0.0, 1.0);
  for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(int(rng.uniform_index(spec.num_classes)));

  RandomModelCase c{spec, params, batch, std::nullopt, 0.0};
  if (rng.uniform() < 0.6) {
    auto gflat = params.flat();
    for (std::size_t i = 0; i < gflat.size(); ++i) gflat[i] += 0.2 * rng.normal();
    c.global_w = fedsim::ModelParams(params.layout(), gflat);
    c.mu = rng.uniform() * 0.5;
  }
  return c;
}

// ---- splits -----------------------------------------------------------------

struct SplitCheck {
  bool partition = true;
  bool balanced = true;
  std::size_t worst_spread = 0;
};

// Partition: every sample id in exactly one fold in [0, k). Balance: within
// each stratum, per-fold counts differ by at most one.
inline SplitCheck check_split(std::span<const fedsim::ClientShard> shards, const fedsim::cohort::SplitPlan& plan,
                              bool per_center) {
  SplitCheck out;
  std::size_t total = 0;
  std::map<std::tuple<std::string, int>, std::vector<std::size_t>> strata;
  for (const auto& s : shards) {
    for (std::size_t i = 0; i < s.n_k(); ++i) {
      ++total;
      const auto it = plan.assignment.find(s.sample_ids[i]);
      if (it == plan.assignment.end() || it->second >= plan.k) {
        out.partition = false;
        continue;
      }
      auto& counts = strata[{per_center ? s.client_id : std::string(), s.labels[i]}];
      counts.resize(plan.k);
      ++counts[it->second];
    }
  }
  if (plan.assignment.size() != total) out.partition = false;
  for (const auto& [key, counts] : strata) {
    const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
    out.worst_spread = std::max(out.worst_spread, *mx - *mn);
  }
  out.balanced = out.worst_spread <= 1;
  return out;
}

}  // namespace oracle
