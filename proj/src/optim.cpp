#include "fedsim/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer: lr must be finite and >= 0");
  if (batch_size == 0) throw ConfigError("optimizer: batch_size must be positive");
  if (epochs == 0) throw ConfigError("optimizer: epochs must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("optimizer: lr decay factor must lie in (0, 1]");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be nonnegative");
}

double OptimizerConfig::lr_at(std::size_t epoch) const {
  if (lr_decay_every == 0) return lr;
  return lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
}

ModelParams train_local(const ModelSpec& spec, const ModelParams& params, const ClientShard& shard,
                        const OptimizerConfig& opt, const ModelParams* global_w, double mu,
                        SeededRng& rng, std::size_t epoch_offset) {
  opt.validate();
  shard.validate();
  if (shard.n_k() == 0) throw DataError("train_local: shard '" + shard.client_id + "' is empty");
  if (global_w && !params.same_layout(*global_w)) {
    throw ConfigError("train_local: global parameters have a different layout");
  }

  ModelParams w = params;
  const std::size_t p = w.size();
  std::vector<double> m(p, 0.0), v(p, 0.0);
  std::size_t step = 0;

  const std::size_t n = shard.n_k();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = opt.lr_at(epoch_offset + epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t end = std::min(n, start + opt.batch_size);
      std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
      std::sort(rows.begin(), rows.end());
      const Batch batch = shard.batch(rows);
      const ModelParams g = grad(spec, w, batch, global_w, mu);
      auto wf = w.flat().data();
      auto gf = g.flat().data();
      ++step;
      if (opt.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < p; ++i) wf[i] -= lr * gf[i];
        continue;
      }
      const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < p; ++i) {
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gf[i];
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gf[i] * gf[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        wf[i] -= lr * opt.weight_decay * wf[i];
        wf[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
      }
    }
  }
  if (!w.flat().all_finite()) throw NumericError("train_local: parameters diverged");
  return w;
}

}  // namespace fedsim
