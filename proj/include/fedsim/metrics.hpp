#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim::metrics {

// Binary voxel volume with physical spacing. Voxel (x, y, z) lives at
// linear index (x * ny + y) * nz + z.
class Mask3D {
 public:
  Mask3D() = default;
  Mask3D(std::array<std::size_t, 3> dims, std::array<double, 3> spacing_mm);

  const std::array<std::size_t, 3>& dims() const { return dims_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  std::size_t voxel_count() const { return voxels_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * dims_[1] + y) * dims_[2] + z;
  }
  bool at(std::size_t x, std::size_t y, std::size_t z) const { return voxels_[index(x, y, z)]; }
  void set(std::size_t x, std::size_t y, std::size_t z, bool on = true);
  bool test(std::size_t i) const { return voxels_[i]; }
  void set_linear(std::size_t i, bool on) { voxels_[i] = on; }

  std::size_t count() const;
  bool same_grid(const Mask3D& other) const;

  // Foreground voxels with at least one 6-neighbour that is background or
  // outside the volume.
  std::vector<std::array<std::size_t, 3>> surface() const;

  friend bool operator==(const Mask3D&, const Mask3D&) = default;

 private:
  std::array<std::size_t, 3> dims_{0, 0, 0};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<bool> voxels_;
};

struct OverlapMetrics {
  double dice, jaccard, precision, recall;
};

// Both masks empty -> all four 1.0. With exactly one mask empty the empty
// ratios (0/0) are reported as 0.
OverlapMetrics overlap_metrics(const Mask3D& pred, const Mask3D& gt);

struct SurfaceMetrics {
  double hd95_mm, assd_mm;
};

// Directed nearest-surface distances, in mm, from each surface voxel of
// `from` to the surface of `to`. Uses an exact separable Euclidean distance
// transform with anisotropic spacing.
std::vector<double> directed_surface_distances(const Mask3D& from, const Mask3D& to);

// HD95 is the linearly interpolated 95th percentile of the pooled directed
// distances of both directions; ASSD is their mean.
SurfaceMetrics surface_distances(const Mask3D& pred, const Mask3D& gt);

// Linear-interpolation percentile (q in [0, 1]) of unsorted values.
double percentile(std::vector<double> values, double q);

// "FCM1", u32 dims[3], f64 spacing[3], one byte per voxel.
void write_mask(std::ostream& out, const Mask3D& mask);
Mask3D read_mask(std::istream& in);

struct ScoredPredictions {
  std::vector<double> scores;  // positive-class probability
  std::vector<int> labels;     // 0 / 1

  void validate() const;
};

double accuracy(const ScoredPredictions& preds, double threshold = 0.5);

// Mann-Whitney statistic from mid-ranks; ties count 1/2.
double auc(const ScoredPredictions& preds);

// Mean one-vs-rest AUC over classes that have both positives and negatives.
// probs is row-major [n x num_classes].
double auc_ovr_macro(std::span<const double> probs, std::span<const int> labels,
                     std::size_t num_classes);

// Fraction of argmax(probs row) == label.
double argmax_accuracy(std::span<const double> probs, std::span<const int> labels,
                       std::size_t num_classes);

enum class KappaWeighting { linear, quadratic };

KappaWeighting parse_kappa_weighting(std::string_view s);

struct RaterTable {
  std::vector<int> rater_a;
  std::vector<int> rater_b;
  std::size_t categories = 3;

  void validate() const;
};

double weighted_kappa(const RaterTable& table, KappaWeighting weighting = KappaWeighting::quadratic);

// Per-class accuracy in percent: share of that class's cases predicted as the
// class. Classes without cases yield nullopt.
std::vector<std::optional<double>> classification_report(std::span<const int> predicted,
                                                         std::span<const int> labels,
                                                         std::size_t num_classes);

struct SummaryStats {
  double mean = 0.0;
  double std_population = 0.0;  // divide by n
  double std_sample = 0.0;      // divide by n - 1 (0 when n < 2)
  std::size_t n = 0;
};

SummaryStats summarize(std::span<const double> values);

struct MetricRow {
  std::string case_id;
  std::string metric;
  double value;
};

// CSV: case,metric,value
void write_metric_csv(std::ostream& out, std::span<const MetricRow> rows);

}  // namespace fedsim::metrics
