#include "fedsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim::experiment {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_mu(double mu) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", mu);
  return buf;
}

const char* to_string(Task t) { return t == Task::binary ? "binary" : "three_class"; }

Task parse_task(const std::string& s) {
  if (s == "binary") return Task::binary;
  if (s == "three_class") return Task::three_class;
  throw ConfigError("unknown task '" + s + "'");
}

const char* to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::centralized: return "centralized";
    case TrainingMode::fedavg: return "fedavg";
    case TrainingMode::fedprox: return "fedprox";
  }
  return "fedavg";
}

TrainingMode parse_mode(const std::string& s) {
  if (s == "centralized") return TrainingMode::centralized;
  if (s == "fedavg") return TrainingMode::fedavg;
  if (s == "fedprox") return TrainingMode::fedprox;
  throw ConfigError("unknown training mode '" + s + "'");
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const char* where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (c == '.') {
      out += 'p';
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace

// --- configuration ---------------------------------------------------------

std::string ExperimentConfig::display_label() const {
  if (!label.empty()) return label;
  switch (mode) {
    case TrainingMode::centralized: return "Centralized";
    case TrainingMode::fedavg: return "FedAvg";
    case TrainingMode::fedprox: return "FedProx (mu=" + fmt_mu(mu) + ")";
  }
  return "FedAvg";
}

ModelSpec ExperimentConfig::resolved_model() const {
  ModelSpec spec = model;
  spec.input_dim = cohort.input_dim;
  spec.input_dim2 = 0;
  spec.num_classes = num_classes();
  if (!cohort.second_modality) spec.fusion = Fusion::none;
  return spec;
}

FedConfig ExperimentConfig::fed_config(std::uint64_t fold_seed) const {
  FedConfig f;
  f.algorithm = mode == TrainingMode::fedprox ? Algorithm::fedprox : Algorithm::fedavg;
  f.mu = mode == TrainingMode::fedprox ? mu : 0.0;
  f.rounds = rounds;
  f.local = optimizer;
  f.participation = mode == TrainingMode::centralized ? 1.0 : participation;
  f.seed = fold_seed;
  f.jobs = 1;
  return f;
}

void ExperimentConfig::validate() const {
  if (cohort.preset != "t1w-default" && cohort.preset != "t2w-default" && cohort.preset != "custom") {
    throw ConfigError("cohort.profiles: unknown preset '" + cohort.preset + "'");
  }
  if (cohort.preset == "custom") {
    if (cohort.profiles.empty()) throw ConfigError("cohort.profiles: empty custom profile list");
    for (const auto& p : cohort.profiles) p.validate(cohort.input_dim);
  }
  if (cohort.input_dim == 0) throw ConfigError("cohort.input_dim must be positive");
  if (model.fusion != Fusion::none && !cohort.second_modality) {
    throw ConfigError("fusion models need cohort.second_modality = true");
  }
  resolved_model().validate();
  optimizer.validate();
  if (mode == TrainingMode::fedavg && mu != 0.0) throw ConfigError("fedavg requires mu = 0");
  if (!(mu >= 0.0)) throw ConfigError("mu must be nonnegative");
  if (rounds == 0) throw ConfigError("rounds must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) throw ConfigError("participation must lie in (0, 1]");
  if (folds < 2) throw ConfigError("split.k must be at least 2");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (!grid.is_array()) throw ConfigError("grid must be an array");
  if (display_label().find_first_of(",\n") != std::string::npos) {
    throw ConfigError("method label must not contain commas or newlines");
  }
}

ExperimentConfig parse_config(const json& doc) {
  try {
    reject_unknown(doc,
                   {"name", "seed", "output_dir", "jobs", "cohort", "model", "optimizer", "federation",
                    "split", "normalization", "label", "grid"},
                   "config");
    if (!doc.contains("seed")) throw ConfigError("config: 'seed' is mandatory");
    ExperimentConfig cfg;
    read(doc, "name", cfg.name);
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    read(doc, "output_dir", cfg.output_dir);
    read(doc, "jobs", cfg.jobs);
    read(doc, "label", cfg.label);

    if (doc.contains("cohort")) {
      const json& c = doc.at("cohort");
      reject_unknown(c, {"profiles", "input_dim", "class_separation", "heterogeneity",
                         "second_modality", "task"}, "cohort");
      read(c, "input_dim", cfg.cohort.input_dim);
      read(c, "class_separation", cfg.cohort.class_separation);
      read(c, "heterogeneity", cfg.cohort.heterogeneity);
      read(c, "second_modality", cfg.cohort.second_modality);
      if (c.contains("task")) cfg.cohort.task = parse_task(c.at("task").get<std::string>());
      if (c.contains("profiles")) {
        const json& p = c.at("profiles");
        if (p.is_string()) {
          cfg.cohort.preset = p.get<std::string>();
        } else {
          cfg.cohort.preset = "custom";
          for (const auto& item : p) {
            reject_unknown(item, {"center_id", "class_counts", "shift", "scale"}, "cohort.profiles[]");
            cohort::CenterProfile prof;
            prof.center_id = item.at("center_id").get<std::string>();
            prof.class_counts = item.at("class_counts").get<std::vector<std::size_t>>();
            prof.shift = item.value("shift", std::vector<double>(cfg.cohort.input_dim, 0.0));
            prof.scale = item.value("scale", std::vector<double>(cfg.cohort.input_dim, 1.0));
            cfg.cohort.profiles.push_back(std::move(prof));
          }
        }
      }
    }

    if (doc.contains("model")) {
      const json& m = doc.at("model");
      reject_unknown(m, {"hidden_dim", "use_attention", "token_dim", "fusion", "fusion_weight"}, "model");
      read(m, "hidden_dim", cfg.model.hidden_dim);
      read(m, "use_attention", cfg.model.use_attention);
      read(m, "token_dim", cfg.model.token_dim);
      read(m, "fusion_weight", cfg.model.fusion_weight);
      if (m.contains("fusion")) cfg.model.fusion = parse_fusion(m.at("fusion").get<std::string>());
    }

    if (doc.contains("optimizer")) {
      const json& o = doc.at("optimizer");
      reject_unknown(o, {"kind", "lr", "batch_size", "epochs", "lr_decay_factor", "lr_decay_every",
                         "weight_decay", "beta1", "beta2", "eps"}, "optimizer");
      if (o.contains("kind")) cfg.optimizer.kind = parse_optimizer(o.at("kind").get<std::string>());
      read(o, "lr", cfg.optimizer.lr);
      read(o, "batch_size", cfg.optimizer.batch_size);
      read(o, "epochs", cfg.optimizer.epochs);
      read(o, "lr_decay_factor", cfg.optimizer.lr_decay_factor);
      read(o, "lr_decay_every", cfg.optimizer.lr_decay_every);
      read(o, "weight_decay", cfg.optimizer.weight_decay);
      read(o, "beta1", cfg.optimizer.beta1);
      read(o, "beta2", cfg.optimizer.beta2);
      read(o, "eps", cfg.optimizer.eps);
    }

    if (doc.contains("federation")) {
      const json& f = doc.at("federation");
      if (f.is_string()) {
        cfg.mode = parse_mode(f.get<std::string>());
      } else {
        reject_unknown(f, {"mode", "mu", "rounds", "participation"}, "federation");
        if (f.contains("mode")) cfg.mode = parse_mode(f.at("mode").get<std::string>());
        read(f, "mu", cfg.mu);
        read(f, "rounds", cfg.rounds);
        read(f, "participation", cfg.participation);
      }
    }

    if (doc.contains("split")) {
      const json& s = doc.at("split");
      reject_unknown(s, {"k", "mode"}, "split");
      read(s, "k", cfg.folds);
      if (s.contains("mode")) cfg.split_mode = cohort::parse_split_mode(s.at("mode").get<std::string>());
    }

    if (doc.contains("normalization")) {
      const auto n = doc.at("normalization").get<std::string>();
      if (n == "none") {
        cfg.normalization.reset();
      } else {
        cfg.normalization = preprocess::parse_norm_kind(n);
      }
    }
    if (doc.contains("grid")) cfg.grid = doc.at("grid");

    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["jobs"] = cfg.jobs;
  if (!cfg.label.empty()) j["label"] = cfg.label;

  ordered_json c;
  if (cfg.cohort.preset == "custom") {
    c["profiles"] = ordered_json::array();
    for (const auto& p : cfg.cohort.profiles) {
      c["profiles"].push_back({{"center_id", p.center_id},
                               {"class_counts", p.class_counts},
                               {"shift", p.shift},
                               {"scale", p.scale}});
    }
  } else {
    c["profiles"] = cfg.cohort.preset;
  }
  c["input_dim"] = cfg.cohort.input_dim;
  c["class_separation"] = cfg.cohort.class_separation;
  c["heterogeneity"] = cfg.cohort.heterogeneity;
  c["second_modality"] = cfg.cohort.second_modality;
  c["task"] = to_string(cfg.cohort.task);
  j["cohort"] = c;

  j["model"] = {{"hidden_dim", cfg.model.hidden_dim},
                {"use_attention", cfg.model.use_attention},
                {"token_dim", cfg.model.token_dim},
                {"fusion", fedsim::to_string(cfg.model.fusion)},
                {"fusion_weight", cfg.model.fusion_weight}};
  const auto& o = cfg.optimizer;
  j["optimizer"] = {{"kind", fedsim::to_string(o.kind)},
                    {"lr", o.lr},
                    {"batch_size", o.batch_size},
                    {"epochs", o.epochs},
                    {"lr_decay_factor", o.lr_decay_factor},
                    {"lr_decay_every", o.lr_decay_every},
                    {"weight_decay", o.weight_decay},
                    {"beta1", o.beta1},
                    {"beta2", o.beta2},
                    {"eps", o.eps}};
  j["federation"] = {{"mode", to_string(cfg.mode)},
                     {"mu", cfg.mu},
                     {"rounds", cfg.rounds},
                     {"participation", cfg.participation}};
  j["split"] = {{"k", cfg.folds}, {"mode", cohort::to_string(cfg.split_mode)}};
  j["normalization"] = cfg.normalization ? preprocess::to_string(*cfg.normalization) : "none";
  if (!cfg.grid.empty()) j["grid"] = cfg.grid;
  return j;
}

// --- data ------------------------------------------------------------------

std::vector<ClientShard> build_cohort(const ExperimentConfig& cfg) {
  std::vector<cohort::CenterProfile> profiles;
  if (cfg.cohort.preset == "custom") {
    profiles = cfg.cohort.profiles;
  } else {
    const auto m = cfg.cohort.preset == "t2w-default" ? cohort::Modality::t2w : cohort::Modality::t1w;
    profiles = cohort::default_profiles(m, cfg.cohort.input_dim, cfg.cohort.heterogeneity);
  }
  cohort::CohortOptions opts;
  opts.input_dim = cfg.cohort.input_dim;
  opts.class_separation = cfg.cohort.class_separation;
  opts.second_modality = cfg.cohort.second_modality;
  SeededRng rng(derive_seed(cfg.seed, "cohort"));
  auto shards = cohort::generate_cohort(profiles, opts, rng);
  if (cfg.cohort.task == Task::binary) shards = cohort::binarize_labels(shards);
  return shards;
}

cohort::SplitPlan build_split(const ExperimentConfig& cfg, const std::vector<ClientShard>& shards) {
  SeededRng rng(derive_seed(cfg.seed, "split"));
  return cohort::stratified_kfold(shards, cfg.folds, cfg.split_mode, rng);
}

// --- running ---------------------------------------------------------------

namespace {

struct FoldData {
  std::vector<ClientShard> train;  // centers with at least one training row
  std::vector<ClientShard> test;   // centers with at least one test row
};

FoldData make_fold(const std::vector<ClientShard>& shards, const cohort::SplitPlan& plan,
                   std::size_t fold, const std::optional<preprocess::NormKind>& norm) {
  FoldData d;
  for (const auto& s : shards) {
    auto tr = cohort::fold_rows(s, plan, fold, false);
    auto te = cohort::fold_rows(s, plan, fold, true);
    if (!tr.empty()) d.train.push_back(s.subset(tr));
    if (!te.empty()) d.test.push_back(s.subset(te));
  }
  if (d.train.empty() || d.test.empty()) throw DataError("fold " + std::to_string(fold) + " is empty");
  if (norm) {
    // Statistics come from the pooled training rows of this fold only.
    const ClientShard pooled = pool_shards(d.train, "train");
    const auto stats = preprocess::fit(pooled.features, *norm);
    std::optional<preprocess::NormalizationStats> stats2;
    if (pooled.features2) stats2 = preprocess::fit(*pooled.features2, *norm);
    for (auto* group : {&d.train, &d.test}) {
      for (auto& s : *group) {
        s.features = preprocess::apply(s.features, stats);
        if (s.features2) s.features2 = preprocess::apply(*s.features2, *stats2);
      }
    }
  }
  return d;
}

struct Evaluated {
  double acc;
  std::optional<double> auc;
};

Evaluated evaluate(const ModelSpec& spec, const ModelParams& w, const ClientShard& test) {
  const Tensor probs = forward(spec, w, test.features, test.features2);
  Evaluated e{};
  if (spec.num_classes == 2) {
    metrics::ScoredPredictions p;
    for (std::size_t i = 0; i < test.n_k(); ++i) p.scores.push_back(std::clamp(probs(i, 1), 0.0, 1.0));
    p.labels = test.labels;
    e.acc = metrics::accuracy(p, 0.5);
    const auto pos = std::count(p.labels.begin(), p.labels.end(), 1);
    if (pos > 0 && pos < static_cast<std::ptrdiff_t>(p.labels.size())) e.auc = metrics::auc(p);
  } else {
    e.acc = metrics::argmax_accuracy(probs.data(), test.labels, spec.num_classes);
    std::set<int> present(test.labels.begin(), test.labels.end());
    if (present.size() >= 2) e.auc = metrics::auc_ovr_macro(probs.data(), test.labels, spec.num_classes);
  }
  return e;
}

std::string joined_ids(const std::vector<ClientShard>& shards) {
  std::string id;
  for (const auto& s : shards) id += (id.empty() ? "" : "+") + s.client_id;
  return id;
}

struct FoldOutcome {
  std::vector<FoldScore> scores;
  std::string history;
};

FoldOutcome run_fold(const ExperimentConfig& cfg, const std::vector<ClientShard>& shards,
                     const cohort::SplitPlan& plan, std::size_t fold) {
  const ModelSpec spec = cfg.resolved_model();
  const FoldData data = make_fold(shards, plan, fold, cfg.normalization);
  const std::string method = cfg.display_label();

  std::vector<Client> clients;
  if (cfg.mode == TrainingMode::centralized) {
    // Pooled training data behaves as a single client named after its centers.
    clients.emplace_back(pool_shards(data.train, joined_ids(data.train)));
  } else {
    for (const auto& s : data.train) clients.emplace_back(s);
  }

  SeededRng init_rng(derive_seed(cfg.seed, "init", fold));
  const ModelParams initial = init_params(spec, init_rng);
  const FedConfig fed = cfg.fed_config(derive_seed(cfg.seed, "fold", fold));

  const ClientShard global_test = pool_shards(data.test, kGlobalScope);
  EvalHook hook = [&](std::size_t, const ModelParams& w) {
    const Evaluated e = evaluate(spec, w, global_test);
    MetricSnapshot m{{"test_acc", e.acc}};
    if (e.auc) m["test_auc"] = *e.auc;
    return m;
  };
  const auto history = run_federation(clients, spec, fed, initial, hook);
  const ModelParams& final_w = history.back().global_w;

  FoldOutcome out;
  for (const auto& t : data.test) {
    const Evaluated e = evaluate(spec, final_w, t);
    out.scores.push_back({method, fold, t.client_id, t.n_k(), e.acc, e.auc});
  }
  const Evaluated g = evaluate(spec, final_w, global_test);
  out.scores.push_back({method, fold, kGlobalScope, global_test.n_k(), g.acc, g.auc});

  std::ostringstream hist;
  write_history_jsonl(hist, history);
  out.history = hist.str();
  return out;
}

ResultBundle run_configs(const std::vector<ExperimentConfig>& cfgs, std::size_t jobs) {
  const ExperimentConfig& base = cfgs.front();
  const auto shards = build_cohort(base);
  const auto plan = build_split(base, shards);

  ResultBundle bundle;
  for (const auto& s : shards) bundle.scopes.push_back(s.client_id);
  bundle.scopes.push_back(kGlobalScope);
  for (const auto& c : cfgs) bundle.methods.push_back(c.display_label());
  {
    std::set<std::string> unique(bundle.methods.begin(), bundle.methods.end());
    if (unique.size() != bundle.methods.size()) throw ConfigError("grid entries share a method label");
  }

  const std::size_t folds = base.folds;
  std::vector<FoldOutcome> outcomes(cfgs.size() * folds);
  parallel_for(outcomes.size(), jobs, [&](std::size_t i) {
    outcomes[i] = run_fold(cfgs[i / folds], shards, plan, i % folds);
  });
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    bundle.folds.insert(bundle.folds.end(), o.scores.begin(), o.scores.end());
    bundle.histories.emplace_back(slug(bundle.methods[i / folds]) + "_fold" + std::to_string(i % folds),
                                  std::move(o.history));
  }
  return bundle;
}

}  // namespace

std::vector<SummaryRow> ResultBundle::summary() const {
  std::vector<SummaryRow> rows;
  for (const auto& m : methods) {
    for (const auto& scope : scopes) {
      std::vector<double> acc, auc;
      for (const auto& f : folds) {
        if (f.method != m || f.scope != scope) continue;
        acc.push_back(f.acc);
        if (f.auc) auc.push_back(*f.auc);
      }
      if (acc.empty()) continue;
      rows.push_back({m, scope, "acc", metrics::summarize(acc)});
      rows.push_back({m, scope, "auc", metrics::summarize(auc)});
    }
  }
  return rows;
}

ResultBundle run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_configs({cfg}, cfg.jobs);
}

std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.grid.empty()) return {cfg};
  const ordered_json base_json = to_json(cfg);
  std::vector<ExperimentConfig> out;
  for (const auto& entry : cfg.grid) {
    if (!entry.is_object()) throw ConfigError("grid entries must be objects");
    json patch = entry;
    if (patch.contains("name")) {
      patch["label"] = patch["name"];
      patch.erase("name");
    }
    if (patch.contains("grid")) throw ConfigError("grid entries cannot nest grids");
    json merged = json::parse(base_json.dump());
    merged.erase("grid");
    merged.erase("label");
    merged.merge_patch(patch);
    ExperimentConfig c = parse_config(merged);
    c.jobs = cfg.jobs;
    c.output_dir = cfg.output_dir;
    const ordered_json cj = to_json(c);
    for (const char* key : {"seed", "cohort", "split", "normalization"}) {
      if (cj.at(key) != base_json.at(key)) {
        throw ConfigError(std::string("grid entry '") + c.display_label() + "' changes shared '" + key + "'");
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

ResultBundle compare_algorithms(const ExperimentConfig& cfg) {
  const auto cfgs = expand_grid(cfg);
  return run_configs(cfgs, cfg.jobs);
}

// --- output ----------------------------------------------------------------

void write_fold_csv(std::ostream& out, const ResultBundle& bundle) {
  out << "method,fold,scope,n,acc,auc\n";
  for (const auto& f : bundle.folds) {
    out << f.method << ',' << f.fold << ',' << f.scope << ',' << f.n << ',' << fmt17(f.acc) << ','
        << (f.auc ? fmt17(*f.auc) : std::string()) << '\n';
  }
}

std::vector<FoldScore> read_fold_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "method,fold,scope,n,acc,auc") {
    throw DataError("folds CSV: unexpected header");
  }
  std::vector<FoldScore> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 6) throw DataError("folds CSV: wrong column count");
    try {
      FoldScore f;
      f.method = cells[0];
      f.fold = std::stoull(cells[1]);
      f.scope = cells[2];
      f.n = std::stoull(cells[3]);
      f.acc = std::stod(cells[4]);
      if (!cells[5].empty()) f.auc = std::stod(cells[5]);
      out.push_back(std::move(f));
    } catch (const std::logic_error&) {
      throw DataError("folds CSV: malformed number in '" + line + "'");
    }
  }
  return out;
}

void write_summary_csv(std::ostream& out, const ResultBundle& bundle) {
  out << "method,scope,metric,mean,std_population,std_sample,n_folds\n";
  for (const auto& r : bundle.summary()) {
    out << r.method << ',' << r.scope << ',' << r.metric << ',';
    if (r.stats.n == 0) {
      out << ",,,0\n";
      continue;
    }
    out << fmt17(r.stats.mean) << ',' << fmt17(r.stats.std_population) << ','
        << fmt17(r.stats.std_sample) << ',' << r.stats.n << '\n';
  }
}

void write_comparison_csv(std::ostream& out, const ResultBundle& bundle) {
  out << "method,acc_mean,acc_std,auc_mean,auc_std,n_folds\n";
  const auto rows = bundle.summary();
  for (const auto& m : bundle.methods) {
    const SummaryRow* acc = nullptr;
    const SummaryRow* auc = nullptr;
    for (const auto& r : rows) {
      if (r.method != m || r.scope != kGlobalScope) continue;
      (r.metric == "acc" ? acc : auc) = &r;
    }
    if (!acc || !auc) continue;
    out << m << ',' << fmt17(acc->stats.mean) << ',' << fmt17(acc->stats.std_population) << ',';
    if (auc->stats.n) {
      out << fmt17(auc->stats.mean) << ',' << fmt17(auc->stats.std_population);
    } else {
      out << ',';
    }
    out << ',' << acc->stats.n << '\n';
  }
}

void write_table(std::ostream& out, const ResultBundle& bundle) {
  const auto rows = bundle.summary();
  auto cell = [](const SummaryRow* r) {
    if (!r || r->stats.n == 0) return std::string("n/a");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f+/-%.2f", 100.0 * r->stats.mean, 100.0 * r->stats.std_population);
    return std::string(buf);
  };
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-18s %-18s\n", "Method", "ACC(%)", "AUC(%)");
  out << line;
  for (const auto& scope : bundle.scopes) {
    out << (scope == kGlobalScope ? std::string("Global") : "Center: " + scope) << '\n';
    for (const auto& m : bundle.methods) {
      const SummaryRow* acc = nullptr;
      const SummaryRow* auc = nullptr;
      for (const auto& r : rows) {
        if (r.method != m || r.scope != scope) continue;
        (r.metric == "acc" ? acc : auc) = &r;
      }
      if (!acc) continue;
      std::snprintf(line, sizeof line, "  %-26s %-18s %-18s\n", m.c_str(), cell(acc).c_str(), cell(auc).c_str());
      out << line;
    }
  }
}

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                   const ResultBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "history", ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  auto open = [&](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    return f;
  };
  {
    auto f = open(dir / "config.json");
    f << to_json(cfg).dump(2) << '\n';
  }
  {
    auto f = open(dir / "folds.csv");
    write_fold_csv(f, bundle);
  }
  {
    auto f = open(dir / "summary.csv");
    write_summary_csv(f, bundle);
  }
  {
    auto f = open(dir / "comparison.csv");
    write_comparison_csv(f, bundle);
  }
  {
    auto f = open(dir / "table.txt");
    write_table(f, bundle);
  }
  for (const auto& [stem, text] : bundle.histories) {
    auto f = open(dir / "history" / (stem + ".jsonl"));
    f << text;
  }
}

}  // namespace fedsim::experiment
