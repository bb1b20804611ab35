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

#ifndef CTRNAS_DATA_HPP_
#define CTRNAS_DATA_HPP_

// Sparse categorical CTR records.
//
// File format, one record per line:
//
//     <label> <id_0> <id_1> ... <id_{m-1}>
//
// label is 0 or 1 and id_i is the index of the active feature within field i.
// An optional first line `#fields: c_0 c_1 ... c_{m-1}` declares the field
// cardinalities; otherwise they are inferred as the maximum id seen plus one.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctrnas::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Record {
  int label = 0;
  std::vector<std::uint32_t> feature_ids;

  bool operator==(const Record&) const = default;
};

struct DatasetMeta {
  std::size_t m = 0;
  std::vector<std::size_t> field_cardinalities;
  std::size_t total_features = 0;
  std::size_t n = 0;

  // Row of field i's first feature in a table holding all fields contiguously.
  std::vector<std::size_t> field_offsets() const;

  bool operator==(const DatasetMeta&) const = default;
};

DatasetMeta make_meta(std::vector<std::size_t> cardinalities, std::size_t n);

struct Dataset {
  DatasetMeta meta;
  std::vector<Record> records;
};

Dataset parse_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const Dataset& ds);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

struct SplitSpec {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

struct Splits {
  std::vector<Record> train;
  std::vector<Record> val;
  std::vector<Record> test;
};

// Seeded shuffle, then contiguous slices of floor(n*r0), floor(n*r1) and the
// remainder.
Splits split(const std::vector<Record>& records, const SplitSpec& spec);

// Seeded disjoint halves; the first (weights) half takes the extra record
// when the count is odd.
std::pair<std::vector<Record>, std::vector<Record>> halve(const std::vector<Record>& train,
                                                          std::uint64_t seed);

// Index lists covering 0..n-1 exactly once. Without a seed the order is the
// input order; with one the permutation is drawn from (seed, epoch).
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed,
                                              std::uint64_t epoch = 0);

// Dense view of a batch: labels plus m field ids per record.
struct Batch {
  std::size_t m = 0;
  std::vector<std::uint32_t> feature_ids;
  std::vector<double> labels;
  // Position of each row in the source sequence, for error messages.
  std::vector<std::size_t> source_rows;

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const std::vector<Record>& records, const std::vector<std::size_t>& indices);
Batch make_batch(const std::vector<Record>& records);

// Generator of datasets with a known second-order structure: every feature
// owns a hidden latent vector and a linear weight; a record's score is the
// sum of pairwise latent inner products plus its linear weights.
struct SynthSpec {
  std::size_t fields = 4;
  std::size_t cardinality = 16;
  std::size_t records = 50000;
  std::size_t latent_dim = 4;
  double noise = 0.1;
  // Standard deviation of the per-feature linear weights; latent entries are
  // standard normal.
  double linear_scale = 1.0;
  std::uint64_t seed = 0;
};

Dataset synth_fm_dataset(const SynthSpec& spec);

// Seeds an engine from a base seed and a stream label so sub-streams are
// independent.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace ctrnas::data

#endif  // CTRNAS_DATA_HPP_
