#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

// Risk grades of the three-class task. Binary tasks use 0/1.
enum RiskClass : int { kNoRisk = 0, kLowRisk = 1, kHighRisk = 2 };

// A labeled mini-batch. x2 carries the second modality for fusion models.
struct Batch {
  Tensor x;
  std::optional<Tensor> x2;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// One simulated center's labeled samples.
struct ClientShard {
  std::string client_id;
  Tensor features;                  // [n_k x D]
  std::optional<Tensor> features2;  // [n_k x D2], second modality when present
  std::vector<int> labels;
  std::vector<std::size_t> sample_ids;  // cohort-global ids

  std::size_t n_k() const { return labels.size(); }
  std::size_t input_dim() const { return features.rank() == 2 ? features.cols() : 0; }

  // Throws DataError if the per-sample vectors disagree in length.
  void validate() const;

  Batch batch(std::span<const std::size_t> rows) const;
  Batch full_batch() const;
  // Rows in the given order, as a new shard with the same id.
  ClientShard subset(std::span<const std::size_t> rows) const;
};

// Concatenates shards in order under a new id.
ClientShard pool_shards(std::span<const ClientShard> shards, std::string client_id);

}  // namespace fedsim
