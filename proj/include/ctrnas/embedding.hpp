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

#ifndef CTRNAS_EMBEDDING_HPP_
#define CTRNAS_EMBEDDING_HPP_

#include <cstddef>
#include <cstdint>

#include "ctrnas/autodiff.hpp"
#include "ctrnas/data.hpp"

namespace ctrnas::embedding {

// All fields' embedding matrices stacked: one row per feature, field i's
// rows starting at meta.field_offsets()[i].
struct EmbeddingTable {
  ad::Value weights;  // (total_features, k)
  std::size_t k = 0;
};

// Two independent tables: `low` feeds the ensemble cell directly and `high`
// feeds the interaction cell.
struct DualEmbedding {
  EmbeddingTable low;
  EmbeddingTable high;
};

inline constexpr double kInitStddev = 0.01;

EmbeddingTable init_table(const data::DatasetMeta& meta, std::size_t k, std::uint64_t seed,
                          std::uint64_t stream);
DualEmbedding init_embedding(const data::DatasetMeta& meta, std::size_t k, std::uint64_t seed);

// Gathers one row per field for every record: (B, m, k).
ad::Value embed(ad::Tape& tape, const EmbeddingTable& table, const data::DatasetMeta& meta,
                const data::Batch& batch);

}  // namespace ctrnas::embedding

#endif  // CTRNAS_EMBEDDING_HPP_
