#include "fedsim/cohort.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim::cohort {

namespace {

const std::array<CenterCounts, 7> kT1w{{
    {"NYU", 48, 79, 23},
    {"MCF", 29, 42, 63},
    {"NU", 43, 126, 17},
    {"AHN", 1, 11, 4},
    {"MCA", 0, 10, 14},
    {"IU", 3, 48, 13},
    {"EMC", 40, 23, 15},
}};

const std::array<CenterCounts, 7> kT2w{{
    {"NYU", 48, 79, 24},
    {"MCF", 25, 42, 63},
    {"NU", 44, 127, 16},
    {"AHN", 1, 13, 4},
    {"MCA", 0, 7, 16},
    {"IU", 3, 46, 14},
    {"EMC", 38, 30, 15},
}};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DataError("bad number '" + s + "'");
  }
}

std::size_t parse_index(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError("bad integer '" + s + "'");
  }
  return std::stoull(s);
}

}  // namespace

std::span<const CenterCounts> center_counts(Modality m) {
  return m == Modality::t1w ? std::span<const CenterCounts>(kT1w) : std::span<const CenterCounts>(kT2w);
}

void CenterProfile::validate(std::size_t input_dim) const {
  if (center_id.empty()) throw ConfigError("center profile without an id");
  std::size_t total = 0;
  for (auto c : class_counts) total += c;
  if (total == 0) throw DataError("center '" + center_id + "' has no samples in any class");
  if (shift.size() != input_dim || scale.size() != input_dim) {
    throw ConfigError("center '" + center_id + "': shift/scale length does not match input_dim");
  }
  for (double s : scale) {
    if (!(s > 0.0)) throw ConfigError("center '" + center_id + "': scale must be positive");
  }
}

std::vector<CenterProfile> default_profiles(Modality m, std::size_t input_dim, double heterogeneity) {
  if (input_dim == 0) throw ConfigError("input_dim must be at least 1");
  std::vector<CenterProfile> out;
  for (const auto& c : center_counts(m)) {
    SeededRng rng(derive_seed(0x1f2e3d4c5b6a7988ULL, c.center_id));
    CenterProfile p;
    p.center_id = c.center_id;
    p.class_counts = {c.no_risk, c.low_risk, c.high_risk};
    p.shift.resize(input_dim);
    p.scale.resize(input_dim);
    for (auto& s : p.shift) s = heterogeneity * rng.normal();
    for (auto& s : p.scale) s = 1.0 + 0.5 * heterogeneity * rng.uniform();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> class_anchor(std::size_t c, std::size_t input_dim) {
  std::vector<double> a(input_dim, 0.0);
  if (c < input_dim) {
    a[c] = 1.0;
  } else {
    a[c % input_dim] = 1.0 + static_cast<double>(c / input_dim);
  }
  return a;
}

std::vector<ClientShard> generate_cohort(std::span<const CenterProfile> profiles,
                                         const CohortOptions& options, SeededRng& rng) {
  const std::size_t d = options.input_dim;
  if (d == 0) throw ConfigError("input_dim must be at least 1");
  if (profiles.empty()) throw DataError("cohort has no centers");
  const std::uint64_t base = rng.next_u64();

  std::vector<ClientShard> shards;
  std::size_t next_id = 0;
  for (const auto& p : profiles) {
    p.validate(d);
    SeededRng center_rng(derive_seed(base, p.center_id));
    ClientShard s;
    s.client_id = p.center_id;
    std::size_t n = 0;
    for (auto c : p.class_counts) n += c;
    s.features = Tensor({n, d});
    if (options.second_modality) s.features2 = Tensor({n, d});
    std::size_t row = 0;
    for (std::size_t cls = 0; cls < p.class_counts.size(); ++cls) {
      const auto anchor = class_anchor(cls, d);
      for (std::size_t i = 0; i < p.class_counts[cls]; ++i, ++row) {
        for (std::size_t j = 0; j < d; ++j) {
          const double mean = options.class_separation * anchor[j] + p.shift[j];
          s.features(row, j) = mean + p.scale[j] * center_rng.normal();
        }
        if (options.second_modality) {
          for (std::size_t j = 0; j < d; ++j) {
            const double mean = options.class_separation * anchor[j] + p.shift[j];
            (*s.features2)(row, j) = mean + p.scale[j] * center_rng.normal();
          }
        }
        s.labels.push_back(static_cast<int>(cls));
        s.sample_ids.push_back(next_id++);
      }
    }
    shards.push_back(std::move(s));
  }
  return shards;
}

std::vector<ClientShard> binarize_labels(std::span<const ClientShard> shards) {
  std::vector<ClientShard> out(shards.begin(), shards.end());
  for (auto& s : out) {
    for (auto& y : s.labels) {
      if (y < kNoRisk || y > kHighRisk) {
        throw DataError("shard '" + s.client_id + "': unknown risk label " + std::to_string(y));
      }
      y = y == kHighRisk ? 1 : 0;
    }
  }
  return out;
}

const char* to_string(SplitMode m) {
  return m == SplitMode::per_center_stratified ? "per_center_stratified" : "pooled_stratified";
}

SplitMode parse_split_mode(std::string_view s) {
  if (s == "per_center_stratified" || s == "per_center") return SplitMode::per_center_stratified;
  if (s == "pooled_stratified" || s == "pooled") return SplitMode::pooled_stratified;
  throw ConfigError("unknown split mode '" + std::string(s) + "'");
}

std::size_t SplitPlan::fold_of(std::size_t sample_id) const {
  auto it = assignment.find(sample_id);
  if (it == assignment.end()) throw DataError("sample " + std::to_string(sample_id) + " is not in the split");
  return it->second;
}

SplitPlan stratified_kfold(std::span<const ClientShard> shards, std::size_t k, SplitMode mode,
                           SeededRng& rng) {
  if (k < 2) throw ConfigError("stratified_kfold: k must be at least 2");

  // Strata in deterministic order: (center in shard order, class ascending)
  // or (class ascending) with members in shard/row order.
  std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> strata;
  for (std::size_t s = 0; s < shards.size(); ++s) {
    shards[s].validate();
    for (std::size_t r = 0; r < shards[s].n_k(); ++r) {
      const std::size_t center_key = mode == SplitMode::per_center_stratified ? s : 0;
      strata[{center_key, shards[s].labels[r]}].push_back(shards[s].sample_ids[r]);
    }
  }

  SplitPlan plan;
  plan.k = k;
  plan.mode = mode;
  std::size_t cursor = 0;
  for (auto& [key, ids] : strata) {
    rng.shuffle(std::span(ids));
    for (std::size_t id : ids) {
      if (!plan.assignment.emplace(id, cursor).second) {
        throw DataError("duplicate sample id " + std::to_string(id));
      }
      cursor = (cursor + 1) % k;
    }
  }
  return plan;
}

std::vector<std::size_t> fold_rows(const ClientShard& shard, const SplitPlan& plan,
                                   std::size_t fold, bool in_fold) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < shard.n_k(); ++r) {
    if ((plan.fold_of(shard.sample_ids[r]) == fold) == in_fold) rows.push_back(r);
  }
  return rows;
}

void write_cohort_csv(std::ostream& out, std::span<const ClientShard> shards) {
  const std::size_t d = shards.empty() ? 0 : shards.front().input_dim();
  const bool second = !shards.empty() && shards.front().features2.has_value();
  const std::size_t d2 = second ? shards.front().features2->cols() : 0;
  out << "sample_id,center_id,label";
  for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
  for (std::size_t j = 0; j < d2; ++j) out << ",g" << j;
  out << '\n';
  for (const auto& s : shards) {
    s.validate();
    if (s.input_dim() != d || s.features2.has_value() != second) {
      throw DataError("write_cohort_csv: shards disagree on feature layout");
    }
    for (std::size_t r = 0; r < s.n_k(); ++r) {
      out << s.sample_ids[r] << ',' << s.client_id << ',' << s.labels[r];
      for (std::size_t j = 0; j < d; ++j) out << ',' << format_double(s.features(r, j));
      for (std::size_t j = 0; j < d2; ++j) out << ',' << format_double((*s.features2)(r, j));
      out << '\n';
    }
  }
}

std::vector<ClientShard> read_cohort_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("cohort CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "sample_id" || header[1] != "center_id" ||
      header[2] != "label") {
    throw DataError("cohort CSV: unexpected header");
  }
  std::size_t d = 0, d2 = 0;
  for (std::size_t i = 3; i < header.size(); ++i) {
    if (header[i] == "f" + std::to_string(d)) {
      ++d;
    } else if (header[i] == "g" + std::to_string(d2)) {
      ++d2;
    } else {
      throw DataError("cohort CSV: unexpected column '" + header[i] + "'");
    }
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> rows, rows2;
  std::map<std::string, ClientShard> by_center;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("cohort CSV line " + std::to_string(line_no) + ": wrong column count");
    }
    const std::string& center = cells[1];
    auto [it, inserted] = by_center.try_emplace(center);
    if (inserted) {
      order.push_back(center);
      it->second.client_id = center;
    }
    it->second.sample_ids.push_back(parse_index(cells[0]));
    it->second.labels.push_back(static_cast<int>(parse_index(cells[2])));
    std::vector<double> f(d), g(d2);
    for (std::size_t j = 0; j < d; ++j) f[j] = parse_double(cells[3 + j]);
    for (std::size_t j = 0; j < d2; ++j) g[j] = parse_double(cells[3 + d + j]);
    rows[center].push_back(std::move(f));
    rows2[center].push_back(std::move(g));
  }

  std::vector<ClientShard> out;
  for (const auto& center : order) {
    ClientShard s = std::move(by_center[center]);
    const auto& fr = rows[center];
    s.features = Tensor({fr.size(), d});
    for (std::size_t r = 0; r < fr.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) s.features(r, j) = fr[r][j];
    if (d2 > 0) {
      const auto& gr = rows2[center];
      Tensor t({gr.size(), d2});
      for (std::size_t r = 0; r < gr.size(); ++r)
        for (std::size_t j = 0; j < d2; ++j) t(r, j) = gr[r][j];
      s.features2 = std::move(t);
    }
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

void write_split_csv(std::ostream& out, const SplitPlan& plan) {
  out << "sample_id,fold\n";
  for (const auto& [id, fold] : plan.assignment) out << id << ',' << fold << '\n';
}

}  // namespace fedsim::cohort
