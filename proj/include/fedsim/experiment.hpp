#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsim/cohort.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optim.hpp"
#include "fedsim/preprocess.hpp"

namespace fedsim::experiment {

enum class Task { binary, three_class };

struct CohortConfig {
  // "t1w-default", "t2w-default", or "custom" (profiles below).
  std::string preset = "t1w-default";
  std::vector<cohort::CenterProfile> profiles;
  std::size_t input_dim = 16;
  double class_separation = 1.5;
  double heterogeneity = 0.5;
  bool second_modality = false;
  Task task = Task::binary;
};

enum class TrainingMode { centralized, fedavg, fedprox };

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t jobs = 1;

  CohortConfig cohort;
  ModelSpec model;  // input_dim and num_classes are derived from the cohort
  OptimizerConfig optimizer;

  TrainingMode mode = TrainingMode::fedavg;
  double mu = 0.0;
  std::size_t rounds = 30;
  double participation = 1.0;

  std::size_t folds = 4;
  cohort::SplitMode split_mode = cohort::SplitMode::per_center_stratified;
  std::optional<preprocess::NormKind> normalization = preprocess::NormKind::zscore;

  // Row label; empty means derived from mode/mu.
  std::string label;
  // compare only: array of JSON overrides merged into this config.
  nlohmann::json grid = nlohmann::json::array();

  std::string display_label() const;
  std::size_t num_classes() const { return cohort.task == Task::binary ? 2 : 3; }
  ModelSpec resolved_model() const;
  FedConfig fed_config(std::uint64_t fold_seed) const;
  void validate() const;
};

// Parses a JSON document; every problem surfaces as ConfigError. A missing
// "seed" is an error.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
// Round-trips through parse_config.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

// Cohort of the config: generated from the preset or custom profiles and
// binarized for the binary task.
std::vector<ClientShard> build_cohort(const ExperimentConfig& cfg);
cohort::SplitPlan build_split(const ExperimentConfig& cfg, const std::vector<ClientShard>& shards);

inline constexpr const char* kGlobalScope = "Global";

struct FoldScore {
  std::string method;
  std::size_t fold = 0;
  std::string scope;  // center id or "Global"
  std::size_t n = 0;  // test cases
  double acc = 0.0;
  std::optional<double> auc;  // absent when the test set has one class

  friend bool operator==(const FoldScore&, const FoldScore&) = default;
};

struct SummaryRow {
  std::string method;
  std::string scope;
  std::string metric;  // "acc" or "auc"
  metrics::SummaryStats stats;
};

struct ResultBundle {
  std::vector<std::string> methods;  // declaration order
  std::vector<std::string> scopes;   // center order, then "Global"
  std::vector<FoldScore> folds;
  // (file stem, JSON-lines round history) per (method, fold).
  std::vector<std::pair<std::string, std::string>> histories;

  std::vector<SummaryRow> summary() const;
};

// Runs every fold for one configuration.
ResultBundle run_experiment(const ExperimentConfig& cfg);

// Expands cfg.grid into configurations (declaration order). Throws
// ConfigError when entries disagree on cohort, split, normalization or seed.
std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& cfg);

// One row per grid entry; all rows share cohort and folds.
ResultBundle compare_algorithms(const ExperimentConfig& cfg);

// folds.csv: method,fold,scope,n,acc,auc
void write_fold_csv(std::ostream& out, const ResultBundle& bundle);
std::vector<FoldScore> read_fold_csv(std::istream& in);
// summary.csv: method,scope,metric,mean,std_population,std_sample,n_folds
void write_summary_csv(std::ostream& out, const ResultBundle& bundle);
// comparison.csv: Global rows, one per method.
void write_comparison_csv(std::ostream& out, const ResultBundle& bundle);
// Per-center blocks plus Global, percent mean+/-std (population std).
void write_table(std::ostream& out, const ResultBundle& bundle);

// Writes config.json, folds.csv, summary.csv, comparison.csv, table.txt and
// history.jsonl into dir.
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                   const ResultBundle& bundle);

}  // namespace fedsim::experiment
