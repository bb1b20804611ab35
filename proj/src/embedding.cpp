// Copyright 2026 The ctrnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctrnas/embedding.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace ctrnas::embedding {

namespace {
constexpr std::uint64_t kLowStream = 0xe10;
constexpr std::uint64_t kHighStream = 0xe11;
}  // namespace

EmbeddingTable init_table(const data::DatasetMeta& meta, std::size_t k, std::uint64_t seed,
                          std::uint64_t stream) {
  if (k < 1) throw std::invalid_argument("embedding size must be at least 1");
  auto rng = data::make_rng(seed, stream);
  std::normal_distribution<double> dist(0.0, kInitStddev);
  std::vector<double> w(meta.total_features * k);
  for (auto& v : w) v = dist(rng);
  return {ad::Value::leaf({meta.total_features, k}, std::move(w), true), k};
}

DualEmbedding init_embedding(const data::DatasetMeta& meta, std::size_t k, std::uint64_t seed) {
  return {init_table(meta, k, seed, kLowStream), init_table(meta, k, seed, kHighStream)};
}

ad::Value embed(ad::Tape& tape, const EmbeddingTable& table, const data::DatasetMeta& meta,
                const data::Batch& batch) {
  if (batch.m != meta.m) {
    throw std::invalid_argument("embed: batch has " + std::to_string(batch.m) +
                                " fields, dataset has " + std::to_string(meta.m));
  }
  const auto offsets = meta.field_offsets();
  std::vector<std::size_t> rows(batch.feature_ids.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (std::size_t f = 0; f < meta.m; ++f) {
      const auto id = batch.feature_ids[r * meta.m + f];
      if (id >= meta.field_cardinalities[f]) {
        const auto record = batch.source_rows.empty() ? r : batch.source_rows[r];
        throw std::out_of_range("embed: record " + std::to_string(record) + ", field " +
                                std::to_string(f) + ": feature id " + std::to_string(id) +
                                " out of range (cardinality " +
                                std::to_string(meta.field_cardinalities[f]) + ")");
      }
      rows[r * meta.m + f] = offsets[f] + id;
    }
  }
  auto flat = ad::gather_rows(tape, table.weights, rows);
  return ad::reshape(tape, flat, {batch.size(), meta.m, table.k});
}

}  // namespace ctrnas::embedding
