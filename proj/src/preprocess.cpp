#include "fedsim/preprocess.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim::preprocess {

const char* to_string(NormKind k) {
  switch (k) {
    case NormKind::minmax: return "minmax";
    case NormKind::whitening: return "whitening";
    case NormKind::zscore: return "zscore";
  }
  return "zscore";
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "minmax") return NormKind::minmax;
  if (s == "whitening") return NormKind::whitening;
  if (s == "zscore") return NormKind::zscore;
  throw ConfigError("unknown normalization '" + std::string(s) + "'");
}

NormalizationStats fit(const Tensor& data, NormKind kind) {
  if (data.rank() != 2) throw DimensionError("fit expects a matrix, got " + shape_string(data.shape()));
  const std::size_t n = data.rows(), d = data.cols();
  if (n < 2) throw DataError("normalization needs at least two rows");

  NormalizationStats s;
  s.kind = kind;
  s.x_min.assign(d, INFINITY);
  s.x_max.assign(d, -INFINITY);
  s.mu.assign(d, 0.0);
  s.sigma.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = data(i, j);
      s.x_min[j] = std::min(s.x_min[j], v);
      s.x_max[j] = std::max(s.x_max[j], v);
      s.mu[j] += v;
    }
  }
  for (auto& m : s.mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = data(i, j) - s.mu[j];
      s.sigma[j] += c * c;
    }
  }
  for (auto& v : s.sigma) v = std::sqrt(v / static_cast<double>(n));

  for (std::size_t j = 0; j < d; ++j) {
    const bool degenerate = kind == NormKind::minmax ? !(s.x_max[j] > s.x_min[j]) : !(s.sigma[j] > 0.0);
    if (degenerate) {
      throw DataError("feature " + std::to_string(j) + " is constant; cannot apply " + to_string(kind));
    }
  }
  return s;
}

namespace {

void check_width(const Tensor& data, const NormalizationStats& stats) {
  if (data.rank() != 2 || data.cols() != stats.features()) {
    throw DimensionError("data " + shape_string(data.shape()) + " does not match " +
                         std::to_string(stats.features()) + " fitted features");
  }
}

}  // namespace

Tensor apply(const Tensor& data, const NormalizationStats& stats) {
  check_width(data, stats);
  Tensor out = data;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      double& v = out(i, j);
      switch (stats.kind) {
        case NormKind::minmax: v = (v - stats.x_min[j]) / (stats.x_max[j] - stats.x_min[j]); break;
        case NormKind::whitening: v = v / stats.sigma[j]; break;
        case NormKind::zscore: v = (v - stats.mu[j]) / stats.sigma[j]; break;
      }
    }
  }
  return out;
}

Tensor invert(const Tensor& normalized, const NormalizationStats& stats) {
  check_width(normalized, stats);
  Tensor out = normalized;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      double& v = out(i, j);
      switch (stats.kind) {
        case NormKind::minmax: v = v * (stats.x_max[j] - stats.x_min[j]) + stats.x_min[j]; break;
        case NormKind::whitening: v = v * stats.sigma[j]; break;
        case NormKind::zscore: v = v * stats.sigma[j] + stats.mu[j]; break;
      }
    }
  }
  return out;
}

nlohmann::json to_json(const NormalizationStats& stats) {
  nlohmann::json j;
  j["kind"] = to_string(stats.kind);
  j["x_min"] = stats.x_min;
  j["x_max"] = stats.x_max;
  j["mu"] = stats.mu;
  j["sigma"] = stats.sigma;
  return j;
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
  try {
    NormalizationStats s;
    s.kind = parse_norm_kind(j.at("kind").get<std::string>());
    s.x_min = j.at("x_min").get<std::vector<double>>();
    s.x_max = j.at("x_max").get<std::vector<double>>();
    s.mu = j.at("mu").get<std::vector<double>>();
    s.sigma = j.at("sigma").get<std::vector<double>>();
    const std::size_t d = s.mu.size();
    if (s.x_min.size() != d || s.x_max.size() != d || s.sigma.size() != d) {
      throw ConfigError("normalization stats: inconsistent feature counts");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("normalization stats: ") + e.what());
  }
}

}  // namespace fedsim::preprocess
