// Command-line front end: generate, split, train, compare, metrics.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fedsim/cohort.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/metrics.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

constexpr const char* kOutDirEnv = "FEDSIM_OUTPUT_DIR";

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = 0;
};

experiment::ExperimentConfig load(const CommonOptions& o) {
  auto cfg = experiment::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) cfg.output_dir = env;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.jobs) cfg.jobs = o.jobs;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + p.string() + "'");
  return f;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--out", o.out, "Output directory (overrides config and $FEDSIM_OUTPUT_DIR)");
  cmd->add_option("--jobs", o.jobs, "Worker threads");
}

int cmd_generate(const CommonOptions& o) {
  const auto cfg = load(o);
  const auto shards = experiment::build_cohort(cfg);
  const fs::path path = fs::path(cfg.output_dir) / "cohort.csv";
  auto f = open_out(path);
  cohort::write_cohort_csv(f, shards);
  std::size_t n = 0;
  for (const auto& s : shards) n += s.n_k();
  std::cout << "wrote " << n << " samples from " << shards.size() << " centers to " << path.string() << '\n';
  return 0;
}

int cmd_split(const CommonOptions& o, const std::string& cohort_csv) {
  const auto cfg = load(o);
  std::vector<ClientShard> shards;
  if (cohort_csv.empty()) {
    shards = experiment::build_cohort(cfg);
  } else {
    std::ifstream in(cohort_csv);
    if (!in) throw DataError("cannot read cohort '" + cohort_csv + "'");
    shards = cohort::read_cohort_csv(in);
  }
  const auto plan = experiment::build_split(cfg, shards);
  const fs::path path = fs::path(cfg.output_dir) / "split.csv";
  auto f = open_out(path);
  cohort::write_split_csv(f, plan);
  std::cout << "wrote " << plan.k << "-fold " << cohort::to_string(plan.mode) << " plan to "
            << path.string() << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  auto cfg = load(o);
  cfg.grid = nlohmann::json::array();
  const auto bundle = experiment::run_experiment(cfg);
  experiment::write_outputs(cfg.output_dir, cfg, bundle);
  experiment::write_table(std::cout, bundle);
  return 0;
}

int cmd_compare(const CommonOptions& o) {
  const auto cfg = load(o);
  if (cfg.grid.empty()) throw ConfigError("compare needs a non-empty 'grid'");
  const auto bundle = experiment::compare_algorithms(cfg);
  experiment::write_outputs(cfg.output_dir, cfg, bundle);
  experiment::write_table(std::cout, bundle);
  return 0;
}

struct MetricsOptions {
  std::string pred, gt, scores, case_id = "case", out;
  double threshold = 0.5;
};

int cmd_metrics(const MetricsOptions& o) {
  std::vector<metrics::MetricRow> rows;
  if (!o.pred.empty() || !o.gt.empty()) {
    if (o.pred.empty() || o.gt.empty()) throw ConfigError("--pred and --gt go together");
    auto read = [](const std::string& p) {
      std::ifstream in(p, std::ios::binary);
      if (!in) throw DataError("cannot read mask '" + p + "'");
      return metrics::read_mask(in);
    };
    const auto pred = read(o.pred);
    const auto gt = read(o.gt);
    const auto ov = metrics::overlap_metrics(pred, gt);
    rows.push_back({o.case_id, "dice", ov.dice});
    rows.push_back({o.case_id, "jaccard", ov.jaccard});
    rows.push_back({o.case_id, "precision", ov.precision});
    rows.push_back({o.case_id, "recall", ov.recall});
    if (pred.count() > 0 && gt.count() > 0) {
      const auto sd = metrics::surface_distances(pred, gt);
      rows.push_back({o.case_id, "hd95_mm", sd.hd95_mm});
      rows.push_back({o.case_id, "assd_mm", sd.assd_mm});
    }
  }
  if (!o.scores.empty()) {
    std::ifstream in(o.scores);
    if (!in) throw DataError("cannot read scores '" + o.scores + "'");
    std::string line;
    std::getline(in, line);
    if (line != "score,label") throw DataError("scores CSV must have header 'score,label'");
    metrics::ScoredPredictions p;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw DataError("malformed scores row '" + line + "'");
      try {
        p.scores.push_back(std::stod(line.substr(0, comma)));
        p.labels.push_back(std::stoi(line.substr(comma + 1)));
      } catch (const std::logic_error&) {
        throw DataError("malformed scores row '" + line + "'");
      }
    }
    rows.push_back({o.case_id, "accuracy", metrics::accuracy(p, o.threshold)});
    rows.push_back({o.case_id, "auc", metrics::auc(p)});
  }
  if (rows.empty()) throw ConfigError("metrics needs --pred/--gt or --scores");

  if (o.out.empty()) {
    metrics::write_metric_csv(std::cout, rows);
  } else {
    auto f = open_out(fs::path(o.out) / "metrics.csv");
    metrics::write_metric_csv(f, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator for multi-center risk classification"};
  app.require_subcommand(1);

  CommonOptions gen_o, split_o, train_o, cmp_o;
  std::string cohort_csv;
  MetricsOptions met_o;

  auto* gen = app.add_subcommand("generate", "Generate the synthetic cohort as CSV");
  add_common(gen, gen_o);
  auto* split = app.add_subcommand("split", "Write the cross-validation fold plan as CSV");
  add_common(split, split_o);
  split->add_option("--cohort", cohort_csv, "Read the cohort from CSV instead of generating it");
  auto* train = app.add_subcommand("train", "Run one experiment over all folds");
  add_common(train, train_o);
  auto* cmp = app.add_subcommand("compare", "Run every grid entry on a shared cohort");
  add_common(cmp, cmp_o);
  auto* met = app.add_subcommand("metrics", "Score masks or probability files");
  met->add_option("--pred", met_o.pred, "Predicted mask (FCM1)");
  met->add_option("--gt", met_o.gt, "Ground-truth mask (FCM1)");
  met->add_option("--scores", met_o.scores, "CSV with header score,label");
  met->add_option("--threshold", met_o.threshold, "Accuracy threshold");
  met->add_option("--case", met_o.case_id, "Case id for the report");
  met->add_option("--out", met_o.out, "Output directory (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(gen_o);
    if (*split) return cmd_split(split_o, cohort_csv);
    if (*train) return cmd_train(train_o);
    if (*cmp) return cmd_compare(cmp_o);
    if (*met) return cmd_metrics(met_o);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return 0;
}
