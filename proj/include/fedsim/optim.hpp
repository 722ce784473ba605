#pragma once

#include <cstddef>
#include <string_view>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class OptimizerKind { sgd, adamw };

const char* to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  // Step decay: lr * factor^floor(epoch / every). every == 0 disables decay.
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 30;
  double weight_decay = 0.0;  // adamw only, decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

// Minibatch training on one shard. Each epoch shuffles the rows with rng,
// cuts ceil(n / batch_size) batches and sorts the rows inside each batch, so
// a full-size batch reproduces grad() on the whole shard bit for bit.
// epoch_offset shifts the learning-rate schedule (federated rounds continue
// the schedule); optimizer state starts fresh on every call.
ModelParams train_local(const ModelSpec& spec, const ModelParams& params, const ClientShard& shard,
                        const OptimizerConfig& opt, const ModelParams* global_w, double mu,
                        SeededRng& rng, std::size_t epoch_offset = 0);

}  // namespace fedsim
