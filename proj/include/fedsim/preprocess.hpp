#pragma once

#include <string_view>
#include <vector>

#include "json.hpp"

#include "fedsim/tensor.hpp"

namespace fedsim::preprocess {

enum class NormKind { minmax, whitening, zscore };

const char* to_string(NormKind k);
NormKind parse_norm_kind(std::string_view s);

// Per-feature statistics. sigma is the population standard deviation.
struct NormalizationStats {
  NormKind kind = NormKind::zscore;
  std::vector<double> x_min, x_max, mu, sigma;

  std::size_t features() const { return mu.size(); }
};

// Throws DataError naming the first degenerate feature (max == min for
// minmax, sigma == 0 otherwise) and when fewer than two rows are given.
NormalizationStats fit(const Tensor& data, NormKind kind);

// minmax: (x - min) / (max - min); whitening: x / sigma; zscore: (x - mu) / sigma.
Tensor apply(const Tensor& data, const NormalizationStats& stats);
Tensor invert(const Tensor& normalized, const NormalizationStats& stats);

nlohmann::json to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(const nlohmann::json& j);

}  // namespace fedsim::preprocess
