#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "fedsim/errors.hpp"

namespace fedsim::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_grid(const Mask3D& a, const Mask3D& b) {
  if (!a.same_grid(b)) throw DimensionError("masks differ in dims or spacing");
}

// Lower envelope of parabolas along one line (Felzenszwalb-Huttenlocher).
// f holds squared distances (kInf = no feature); positions are i * step.
void edt_line(std::span<double> f, double step, std::vector<std::size_t>& v,
              std::vector<double>& z, std::vector<double>& out) {
  const std::size_t n = f.size();
  v.clear();
  z.clear();
  auto pos = [step](std::size_t i) { return static_cast<double>(i) * step; };
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (v.empty()) {
      v.push_back(q);
      z.push_back(-kInf);
      continue;
    }
    const double xq = pos(q);
    double s;
    while (true) {
      const std::size_t p = v.back();
      const double xp = pos(p);
      s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
      if (s <= z.back() && v.size() > 1) {
        v.pop_back();
        z.pop_back();
        continue;
      }
      break;
    }
    if (s <= z.back()) {
      // Only one parabola left and it is dominated everywhere.
      v.back() = q;
    } else {
      v.push_back(q);
      z.push_back(s);
    }
  }
  if (v.empty()) return;  // whole line stays at infinity
  out.assign(n, 0.0);
  std::size_t k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double xq = pos(q);
    while (k + 1 < v.size() && z[k + 1] < xq) ++k;
    const double dx = xq - pos(v[k]);
    out[q] = dx * dx + f[v[k]];
  }
  std::copy(out.begin(), out.end(), f.begin());
}

// Squared distance (mm^2) from every voxel center to the nearest voxel in
// `features` (a linear-index list on the grid of `grid`).
std::vector<double> squared_edt(const Mask3D& grid, const std::vector<std::array<std::size_t, 3>>& features) {
  const auto [nx, ny, nz] = grid.dims();
  const auto sp = grid.spacing();
  std::vector<double> d(nx * ny * nz, kInf);
  for (const auto& f : features) d[grid.index(f[0], f[1], f[2])] = 0.0;

  std::vector<std::size_t> v;
  std::vector<double> z, out, line;
  // z axis (contiguous)
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      edt_line(std::span(d).subspan(grid.index(x, y, 0), nz), sp[2], v, z, out);
  // y axis
  line.resize(ny);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t zz = 0; zz < nz; ++zz) {
      for (std::size_t y = 0; y < ny; ++y) line[y] = d[grid.index(x, y, zz)];
      edt_line(line, sp[1], v, z, out);
      for (std::size_t y = 0; y < ny; ++y) d[grid.index(x, y, zz)] = line[y];
    }
  }
  // x axis
  line.resize(nx);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t zz = 0; zz < nz; ++zz) {
      for (std::size_t x = 0; x < nx; ++x) line[x] = d[grid.index(x, y, zz)];
      edt_line(line, sp[0], v, z, out);
      for (std::size_t x = 0; x < nx; ++x) d[grid.index(x, y, zz)] = line[x];
    }
  }
  return d;
}

}  // namespace

Mask3D::Mask3D(std::array<std::size_t, 3> dims, std::array<double, 3> spacing_mm)
    : dims_(dims), spacing_(spacing_mm), voxels_(dims[0] * dims[1] * dims[2], false) {
  for (double s : spacing_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("mask spacing must be positive and finite");
  }
}

void Mask3D::set(std::size_t x, std::size_t y, std::size_t z, bool on) {
  if (x >= dims_[0] || y >= dims_[1] || z >= dims_[2]) throw DimensionError("voxel index out of range");
  voxels_[index(x, y, z)] = on;
}

std::size_t Mask3D::count() const {
  return static_cast<std::size_t>(std::count(voxels_.begin(), voxels_.end(), true));
}

bool Mask3D::same_grid(const Mask3D& other) const {
  return dims_ == other.dims_ && spacing_ == other.spacing_;
}

std::vector<std::array<std::size_t, 3>> Mask3D::surface() const {
  std::vector<std::array<std::size_t, 3>> out;
  const auto [nx, ny, nz] = dims_;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t z = 0; z < nz; ++z) {
        if (!at(x, y, z)) continue;
        const bool boundary = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny ||
                              z + 1 == nz || !at(x - 1, y, z) || !at(x + 1, y, z) ||
                              !at(x, y - 1, z) || !at(x, y + 1, z) || !at(x, y, z - 1) ||
                              !at(x, y, z + 1);
        if (boundary) out.push_back({x, y, z});
      }
    }
  }
  return out;
}

OverlapMetrics overlap_metrics(const Mask3D& pred, const Mask3D& gt) {
  require_same_grid(pred, gt);
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.voxel_count(); ++i) {
    const bool a = pred.test(i), b = gt.test(i);
    p += a;
    g += b;
    both += a && b;
  }
  if (p == 0 && g == 0) return {1.0, 1.0, 1.0, 1.0};
  const double inter = static_cast<double>(both);
  const double uni = static_cast<double>(p + g - both);
  OverlapMetrics m;
  m.dice = 2.0 * inter / static_cast<double>(p + g);
  m.jaccard = inter / uni;
  m.precision = p ? inter / static_cast<double>(p) : 0.0;
  m.recall = g ? inter / static_cast<double>(g) : 0.0;
  return m;
}

std::vector<double> directed_surface_distances(const Mask3D& from, const Mask3D& to) {
  require_same_grid(from, to);
  const auto src = from.surface();
  const auto dst = to.surface();
  if (src.empty() || dst.empty()) throw UndefinedMetricError("surface distance of an empty mask");
  const auto d2 = squared_edt(to, dst);
  std::vector<double> out;
  out.reserve(src.size());
  for (const auto& s : src) out.push_back(std::sqrt(d2[from.index(s[0], s[1], s[2])]));
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw UndefinedMetricError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SurfaceMetrics surface_distances(const Mask3D& pred, const Mask3D& gt) {
  require_same_grid(pred, gt);
  if (pred.count() == 0 || gt.count() == 0) {
    throw UndefinedMetricError("HD95/ASSD undefined for an empty mask");
  }
  std::vector<double> pooled = directed_surface_distances(pred, gt);
  const auto back = directed_surface_distances(gt, pred);
  pooled.insert(pooled.end(), back.begin(), back.end());
  // Sorted summation makes the result independent of argument order.
  std::sort(pooled.begin(), pooled.end());
  double sum = 0.0;
  for (double d : pooled) sum += d;
  return {percentile(pooled, 0.95), sum / static_cast<double>(pooled.size())};
}

void ScoredPredictions::validate() const {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("score outside [0, 1]");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("binary label must be 0 or 1");
  }
}

double accuracy(const ScoredPredictions& preds, double threshold) {
  preds.validate();
  if (preds.scores.empty()) throw DataError("accuracy of an empty prediction set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    hits += (preds.scores[i] >= threshold) == (preds.labels[i] == 1);
  }
  return static_cast<double>(hits) / static_cast<double>(preds.scores.size());
}

double auc(const ScoredPredictions& preds) {
  preds.validate();
  const std::size_t n = preds.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return preds.scores[a] < preds.scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && preds.scores[idx[j]] == preds.scores[idx[i]]) ++j;
    // Ranks i+1..j share their mid-rank (i + 1 + j) / 2.
    const double mid = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (preds.labels[idx[t]] == 1) {
        rank_sum_pos += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC needs both classes");
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double auc_ovr_macro(std::span<const double> probs, std::span<const int> labels,
                     std::size_t num_classes) {
  if (probs.size() != labels.size() * num_classes) throw DimensionError("auc_ovr_macro: shape mismatch");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ScoredPredictions p;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      p.scores.push_back(std::clamp(probs[i * num_classes + c], 0.0, 1.0));
      p.labels.push_back(labels[i] == static_cast<int>(c) ? 1 : 0);
    }
    const auto pos = std::count(p.labels.begin(), p.labels.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(p.labels.size())) continue;
    total += auc(p);
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("AUC needs at least two classes present");
  return total / static_cast<double>(used);
}

double argmax_accuracy(std::span<const double> probs, std::span<const int> labels,
                       std::size_t num_classes) {
  if (labels.empty()) throw DataError("accuracy of an empty prediction set");
  if (probs.size() != labels.size() * num_classes) throw DimensionError("argmax_accuracy: shape mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = probs.subspan(i * num_classes, num_classes);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

KappaWeighting parse_kappa_weighting(std::string_view s) {
  if (s == "linear") return KappaWeighting::linear;
  if (s == "quadratic") return KappaWeighting::quadratic;
  throw ConfigError("unknown kappa weighting '" + std::string(s) + "'");
}

void RaterTable::validate() const {
  if (rater_a.size() != rater_b.size()) throw DataError("raters graded different case counts");
  if (rater_a.size() < 2) throw DataError("weighted kappa needs at least two cases");
  if (categories < 2) throw ConfigError("rating scale needs at least two grades");
  for (const auto* r : {&rater_a, &rater_b}) {
    for (int g : *r) {
      if (g < 0 || static_cast<std::size_t>(g) >= categories) throw DataError("grade outside the scale");
    }
  }
}

double weighted_kappa(const RaterTable& table, KappaWeighting weighting) {
  table.validate();
  const std::size_t c = table.categories;
  const double n = static_cast<double>(table.rater_a.size());
  std::vector<double> observed(c * c, 0.0), row(c, 0.0), col(c, 0.0);
  for (std::size_t i = 0; i < table.rater_a.size(); ++i) {
    const auto a = static_cast<std::size_t>(table.rater_a[i]);
    const auto b = static_cast<std::size_t>(table.rater_b[i]);
    observed[a * c + b] += 1.0 / n;
    row[a] += 1.0 / n;
    col[b] += 1.0 / n;
  }
  double num = 0.0, den = 0.0;
  const double span = static_cast<double>(c - 1);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double dist = std::abs(static_cast<double>(i) - static_cast<double>(j)) / span;
      const double w = weighting == KappaWeighting::linear ? dist : dist * dist;
      num += w * observed[i * c + j];
      den += w * row[i] * col[j];
    }
  }
  if (den == 0.0) throw UndefinedMetricError("weighted kappa undefined: degenerate marginals");
  return 1.0 - num / den;
}

std::vector<std::optional<double>> classification_report(std::span<const int> predicted,
                                                         std::span<const int> labels,
                                                         std::size_t num_classes) {
  if (predicted.size() != labels.size()) throw DataError("predictions and labels differ in length");
  std::vector<std::size_t> cases(num_classes, 0), hits(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("label outside the class scale");
    }
    ++cases[labels[i]];
    hits[labels[i]] += predicted[i] == labels[i];
  }
  std::vector<std::optional<double>> out(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (cases[k]) out[k] = 100.0 * static_cast<double>(hits[k]) / static_cast<double>(cases[k]);
  }
  return out;
}

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_population = std::sqrt(ss / static_cast<double>(s.n));
  s.std_sample = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  return s;
}

void write_metric_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "case,metric,value\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.case_id << ',' << r.metric << ',' << buf << '\n';
  }
}

}  // namespace fedsim::metrics
