#include "fedsim/data.hpp"

#include "fedsim/errors.hpp"

namespace fedsim {

void ClientShard::validate() const {
  const std::size_t n = labels.size();
  if (features.rank() != 2 || features.rows() != n) {
    throw DataError("shard '" + client_id + "': features " + shape_string(features.shape()) +
                    " do not match " + std::to_string(n) + " labels");
  }
  if (features2 && (features2->rank() != 2 || features2->rows() != n)) {
    throw DataError("shard '" + client_id + "': second-modality features do not match labels");
  }
  if (sample_ids.size() != n) {
    throw DataError("shard '" + client_id + "': sample id count does not match labels");
  }
}

Batch ClientShard::batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.x = gather_rows(features, rows);
  if (features2) b.x2 = gather_rows(*features2, rows);
  b.labels.reserve(rows.size());
  for (auto r : rows) b.labels.push_back(labels[r]);
  return b;
}

Batch ClientShard::full_batch() const {
  Batch b;
  b.x = features;
  b.x2 = features2;
  b.labels = labels;
  return b;
}

ClientShard ClientShard::subset(std::span<const std::size_t> rows) const {
  ClientShard s;
  s.client_id = client_id;
  s.features = gather_rows(features, rows);
  if (features2) s.features2 = gather_rows(*features2, rows);
  for (auto r : rows) {
    s.labels.push_back(labels[r]);
    s.sample_ids.push_back(sample_ids[r]);
  }
  return s;
}

ClientShard pool_shards(std::span<const ClientShard> shards, std::string client_id) {
  ClientShard out;
  out.client_id = std::move(client_id);
  bool second = !shards.empty() && shards.front().features2.has_value();
  for (const auto& s : shards) {
    s.validate();
    if (s.features2.has_value() != second) {
      throw DataError("pool_shards: mixed presence of second-modality features");
    }
    out.features = concat_rows(out.features, s.features);
    if (second) out.features2 = concat_rows(out.features2.value_or(Tensor()), *s.features2);
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
    out.sample_ids.insert(out.sample_ids.end(), s.sample_ids.begin(), s.sample_ids.end());
  }
  return out;
}

}  // namespace fedsim
