#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/rng.hpp"

namespace fedsim::cohort {

enum class Modality { t1w, t2w };

// Sample counts per center and risk class (no, low, high).
struct CenterCounts {
  std::string center_id;
  std::size_t no_risk, low_risk, high_risk;
  std::size_t total() const { return no_risk + low_risk + high_risk; }
};

// Per-center class counts of the classification cohort (seven centers).
std::span<const CenterCounts> center_counts(Modality m);

struct CenterProfile {
  std::string center_id;
  std::vector<std::size_t> class_counts;  // indexed by class label
  std::vector<double> shift;              // feature-space mean offset, length D
  std::vector<double> scale;              // per-feature std multiplier, length D

  void validate(std::size_t input_dim) const;
};

// Profiles carrying the seven-center counts with a deterministic per-center
// affine shift: shift ~ heterogeneity * N(0, 1), scale = 1 + 0.5 * heterogeneity * U(0, 1)
// drawn from a stream keyed by the center id.
std::vector<CenterProfile> default_profiles(Modality m, std::size_t input_dim,
                                            double heterogeneity = 0.5);

struct CohortOptions {
  std::size_t input_dim = 16;
  double class_separation = 1.5;
  // Draws an independent second view (same class anchors, own noise) for
  // fusion models.
  bool second_modality = false;
};

// Unit class anchor for class c in D dimensions: e_c when c < D, otherwise
// (1 + c / D) e_{c mod D}.
std::vector<double> class_anchor(std::size_t c, std::size_t input_dim);

// Per center and class, draws class_counts[c] samples from
// N(class_separation * anchor_c + shift, diag(scale^2)). Sample ids run
// consecutively across centers in profile order. Center streams are seeded
// from (rng draw, center id), so centers are independent of each other.
std::vector<ClientShard> generate_cohort(std::span<const CenterProfile> profiles,
                                         const CohortOptions& options, SeededRng& rng);

// high -> 1, {no, low} -> 0.
std::vector<ClientShard> binarize_labels(std::span<const ClientShard> shards);

enum class SplitMode { per_center_stratified, pooled_stratified };

const char* to_string(SplitMode m);
SplitMode parse_split_mode(std::string_view s);

struct SplitPlan {
  std::size_t k = 0;
  SplitMode mode = SplitMode::per_center_stratified;
  std::map<std::size_t, std::size_t> assignment;  // sample id -> fold

  std::size_t fold_of(std::size_t sample_id) const;
};

// Strata are center x class (per_center) or class (pooled). Each stratum is
// shuffled and dealt round-robin, continuing from the fold where the previous
// stratum stopped, so strata smaller than k land in distinct folds.
// Fold index f is the same test round for every center.
SplitPlan stratified_kfold(std::span<const ClientShard> shards, std::size_t k, SplitMode mode,
                           SeededRng& rng);

// Row indices of `shard` whose sample falls in (or outside of) `fold`.
std::vector<std::size_t> fold_rows(const ClientShard& shard, const SplitPlan& plan,
                                   std::size_t fold, bool in_fold);

// CSV: sample_id,center_id,label,f0..f{D-1}[,g0..g{D2-1}]
void write_cohort_csv(std::ostream& out, std::span<const ClientShard> shards);
std::vector<ClientShard> read_cohort_csv(std::istream& in);

// CSV: sample_id,fold
void write_split_csv(std::ostream& out, const SplitPlan& plan);

}  // namespace fedsim::cohort
