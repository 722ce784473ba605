#include "fedsim/federation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include "json.hpp"
#include <ostream>
#include <set>

#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

const char* to_string(Algorithm a) { return a == Algorithm::fedavg ? "fedavg" : "fedprox"; }

Algorithm parse_algorithm(std::string_view s) {
  if (s == "fedavg") return Algorithm::fedavg;
  if (s == "fedprox") return Algorithm::fedprox;
  throw ConfigError("unknown federated algorithm '" + std::string(s) + "'");
}

void FedConfig::validate() const {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("federation: mu must be finite and >= 0");
  if (algorithm == Algorithm::fedavg && mu != 0.0) {
    throw ConfigError("federation: fedavg requires mu = 0");
  }
  if (rounds == 0) throw ConfigError("federation: rounds must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("federation: participation must lie in (0, 1]");
  }
  local.validate();
}

Client::Client(ClientShard shard) : shard_(std::move(shard)) {
  shard_.validate();
  if (shard_.n_k() == 0) throw DataError("client '" + shard_.client_id + "' has no samples");
}

LocalUpdate Client::local_update(const ModelSpec& spec, const ModelParams& global_w,
                                 const LocalTask& task) const {
  SeededRng rng(task.seed);
  ModelParams w = train_local(spec, global_w, shard_, task.opt,
                              task.proximal ? &global_w : nullptr, task.proximal ? task.mu : 0.0,
                              rng, task.epoch_offset);
  return {shard_.client_id, shard_.n_k(), std::move(w)};
}

ModelParams aggregate_fedavg(std::span<const LocalUpdate> updates) {
  if (updates.empty()) throw ProtocolError("aggregate: no client updates");
  std::vector<const LocalUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const LocalUpdate* a, const LocalUpdate* b) { return a->client_id < b->client_id; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i]->n_k == 0) throw DataError("aggregate: client '" + sorted[i]->client_id + "' reports n_k = 0");
    if (!sorted[i]->params.same_layout(sorted.front()->params)) {
      throw ProtocolError("aggregate: client '" + sorted[i]->client_id + "' sent a different layout");
    }
    if (i > 0 && sorted[i]->client_id == sorted[i - 1]->client_id) {
      throw ProtocolError("aggregate: duplicate client id '" + sorted[i]->client_id + "'");
    }
  }

  // Running weighted mean: after client k the accumulator equals
  // sum_{j<=k} n_j w_j / sum_{j<=k} n_j. Identical inputs stay exact.
  ModelParams mean = sorted.front()->params;
  double total = static_cast<double>(sorted.front()->n_k);
  auto acc = mean.flat().data();
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const double n = static_cast<double>(sorted[k]->n_k);
    total += n;
    const double frac = n / total;
    auto w = sorted[k]->params.flat().data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += frac * (w[i] - acc[i]);
  }
  return mean;
}

std::uint64_t client_seed(std::uint64_t seed, std::string_view client_id, std::size_t t) {
  return derive_seed(seed, client_id, t);
}

std::vector<std::string> select_participants(std::span<const Client> clients, const FedConfig& cfg,
                                             std::size_t t) {
  std::vector<std::string> ids;
  for (const auto& c : clients) ids.push_back(c.id());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ProtocolError("client ids are not unique");
  }

  if (t >= 1 && t - 1 < cfg.schedule.size()) {
    std::vector<std::string> chosen = cfg.schedule[t - 1];
    std::sort(chosen.begin(), chosen.end());
    chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    for (const auto& id : chosen) {
      if (!std::binary_search(ids.begin(), ids.end(), id)) {
        throw ProtocolError("round " + std::to_string(t) + " schedules unknown client '" + id + "'");
      }
    }
    if (chosen.empty()) throw ProtocolError("round " + std::to_string(t) + " has no participants");
    return chosen;
  }
  if (ids.empty()) throw ProtocolError("federation has no clients");
  if (cfg.participation >= 1.0) return ids;

  auto count = static_cast<std::size_t>(
      std::ceil(cfg.participation * static_cast<double>(ids.size()) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, ids.size());
  SeededRng rng(derive_seed(cfg.seed, "participation", t));
  rng.shuffle(std::span(ids));
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

RoundState run_round(const RoundState& state, std::span<const Client> clients,
                     const ModelSpec& spec, const FedConfig& cfg) {
  cfg.validate();
  const std::size_t t = state.t + 1;
  const std::vector<std::string> chosen = select_participants(clients, cfg, t);

  std::vector<const Client*> participants;
  for (const auto& id : chosen) {
    for (const auto& c : clients) {
      if (c.id() == id) {
        participants.push_back(&c);
        break;
      }
    }
  }
  if (participants.empty()) throw ProtocolError("no participants selected");

  std::vector<LocalUpdate> updates(participants.size());
  parallel_for(participants.size(), cfg.jobs, [&](std::size_t i) {
    LocalTask task;
    task.opt = cfg.local;
    task.proximal = cfg.algorithm == Algorithm::fedprox;
    task.mu = cfg.effective_mu();
    task.seed = client_seed(cfg.seed, participants[i]->id(), t);
    task.epoch_offset = state.t * cfg.local.epochs;
    updates[i] = participants[i]->local_update(spec, state.global_w, task);
  });

  RoundState next;
  next.t = t;
  next.global_w = aggregate_fedavg(updates);
  for (const auto& u : updates) next.participants.emplace_back(u.client_id, u.n_k);
  next.per_round_metrics = state.per_round_metrics;
  if (!next.global_w.flat().all_finite()) throw NumericError("aggregated model is not finite");
  return next;
}

std::vector<RoundState> run_federation(std::span<const Client> clients, const ModelSpec& spec,
                                       const FedConfig& cfg, const ModelParams& initial,
                                       const EvalHook& eval_hook) {
  cfg.validate();
  if (initial.layout() != model_layout(spec)) {
    throw ConfigError("initial parameters do not match the model spec");
  }
  std::vector<RoundState> history;
  history.push_back(RoundState{0, initial, {}, {}});
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundState next = run_round(history.back(), clients, spec, cfg);
    if (eval_hook) {
      const ModelParams frozen = next.global_w;
      next.per_round_metrics.push_back(eval_hook(next.t, frozen));
    }
    history.push_back(std::move(next));
  }
  return history;
}

std::string params_checksum(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params.flat().data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    h = fnv1a64(b, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_history_jsonl(std::ostream& out, std::span<const RoundState> history) {
  for (const auto& s : history) {
    if (s.t == 0) continue;
    nlohmann::ordered_json rec;
    rec["t"] = s.t;
    rec["clients"] = nlohmann::ordered_json::array();
    for (const auto& [id, n] : s.participants) rec["clients"].push_back({{"id", id}, {"n_k", n}});
    rec["checksum"] = params_checksum(s.global_w);
    rec["metrics"] = nlohmann::ordered_json::object();
    if (s.per_round_metrics.size() >= s.t) {
      for (const auto& [k, v] : s.per_round_metrics[s.t - 1]) rec["metrics"][k] = v;
    }
    out << rec.dump() << '\n';
  }
}

}  // namespace fedsim
