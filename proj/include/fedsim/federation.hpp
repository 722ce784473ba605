#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optim.hpp"

namespace fedsim {

enum class Algorithm { fedavg, fedprox };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

struct FedConfig {
  Algorithm algorithm = Algorithm::fedavg;
  double mu = 0.0;  // must be 0 for fedavg
  std::size_t rounds = 1;
  OptimizerConfig local;  // local.epochs = local epochs per round
  // Fraction of clients drawn each round (seeded); 1 = everyone.
  double participation = 1.0;
  // Explicit participant ids per round; overrides `participation` when the
  // round index is covered.
  std::vector<std::vector<std::string>> schedule;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
  double effective_mu() const { return algorithm == Algorithm::fedprox ? mu : 0.0; }
};

// What crosses the client/server boundary in each direction.
struct LocalTask {
  OptimizerConfig opt;
  bool proximal = false;
  double mu = 0.0;
  std::uint64_t seed = 0;
  std::size_t epoch_offset = 0;
};

struct LocalUpdate {
  std::string client_id;
  std::size_t n_k = 0;
  ModelParams params;
};

// A simulated center. The shard is private: the only way to use it is
// local_update(), which receives parameters and returns parameters plus a
// sample count.
class Client {
 public:
  explicit Client(ClientShard shard);

  const std::string& id() const { return shard_.client_id; }
  std::size_t sample_count() const { return shard_.n_k(); }

  LocalUpdate local_update(const ModelSpec& spec, const ModelParams& global_w,
                           const LocalTask& task) const;

 private:
  ClientShard shard_;
};

using MetricSnapshot = std::map<std::string, double>;

struct RoundState {
  std::size_t t = 0;
  ModelParams global_w;
  std::vector<std::pair<std::string, std::size_t>> participants;  // (id, n_k), id-sorted
  std::vector<MetricSnapshot> per_round_metrics;
};

// w = sum_k n_k w_k / sum_k n_k, folded in ascending client_id order as a
// running weighted mean. Throws ProtocolError on an empty list, duplicate
// ids or differing layouts; DataError on n_k == 0.
ModelParams aggregate_fedavg(std::span<const LocalUpdate> updates);

// Seed of client `client_id` in round t.
std::uint64_t client_seed(std::uint64_t seed, std::string_view client_id, std::size_t t);

// Participant ids of round t (the round being computed), id-sorted.
std::vector<std::string> select_participants(std::span<const Client> clients, const FedConfig& cfg,
                                             std::size_t t);

// One synchronous round: every participant trains from state.global_w and
// the n_k-weighted mean becomes the new global model.
RoundState run_round(const RoundState& state, std::span<const Client> clients,
                     const ModelSpec& spec, const FedConfig& cfg);

using EvalHook = std::function<MetricSnapshot(std::size_t t, const ModelParams& global_w)>;

// history[0] is the initial state (t = 0); history[r] follows round r.
std::vector<RoundState> run_federation(std::span<const Client> clients, const ModelSpec& spec,
                                       const FedConfig& cfg, const ModelParams& initial,
                                       const EvalHook& eval_hook = {});

// 16 hex digits of FNV-1a over the little-endian bytes of the flat vector.
std::string params_checksum(const ModelParams& params);

// One JSON object per completed round:
//   {"t":..,"clients":[{"id":..,"n_k":..}],"checksum":"..","metrics":{..}}
void write_history_jsonl(std::ostream& out, std::span<const RoundState> history);

}  // namespace fedsim
