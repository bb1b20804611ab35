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

#include "ctrnas/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

namespace ctrnas::data {

namespace {

constexpr std::string_view kHeader = "#fields:";

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

long long parse_int(std::string_view tok, std::size_t line_no) {
  long long v = 0;
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(line_no, "malformed integer '" + std::string(tok) + "'");
  return v;
}

}  // namespace

std::vector<std::size_t> DatasetMeta::field_offsets() const {
  std::vector<std::size_t> out(field_cardinalities.size(), 0);
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = out[i - 1] + field_cardinalities[i - 1];
  return out;
}

DatasetMeta make_meta(std::vector<std::size_t> cardinalities, std::size_t n) {
  DatasetMeta meta;
  meta.m = cardinalities.size();
  meta.total_features = std::accumulate(cardinalities.begin(), cardinalities.end(), std::size_t{0});
  meta.field_cardinalities = std::move(cardinalities);
  meta.n = n;
  return meta;
}

Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::optional<std::vector<std::size_t>> declared;
  std::vector<std::size_t> observed;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> m;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view view(line);
    if (line_no == 1 && view.starts_with(kHeader)) {
      std::vector<std::size_t> cards;
      for (auto tok : tokenize(view.substr(kHeader.size()))) {
        const auto v = parse_int(tok, line_no);
        if (v <= 0) fail(line_no, "field cardinality must be positive");
        cards.push_back(static_cast<std::size_t>(v));
      }
      if (cards.empty()) fail(line_no, "header declares no fields");
      m = cards.size();
      declared = std::move(cards);
      continue;
    }
    const auto toks = tokenize(view);
    if (toks.empty()) fail(line_no, "empty line");
    if (toks.size() < 2) fail(line_no, "expected a label and at least one feature index");
    const std::size_t fields = toks.size() - 1;
    if (!m) m = fields;
    if (fields != *m) {
      fail(line_no, "expected " + std::to_string(*m) + " fields, found " + std::to_string(fields));
    }
    Record rec;
    const auto label = parse_int(toks[0], line_no);
    if (label != 0 && label != 1) fail(line_no, "label must be 0 or 1");
    rec.label = static_cast<int>(label);
    rec.feature_ids.reserve(fields);
    if (observed.empty()) observed.assign(fields, 0);
    for (std::size_t f = 0; f < fields; ++f) {
      const auto id = parse_int(toks[f + 1], line_no);
      if (id < 0) fail(line_no, "negative feature index in field " + std::to_string(f));
      if (id > static_cast<long long>(UINT32_MAX) - 1) fail(line_no, "feature index too large");
      if (declared && static_cast<std::size_t>(id) >= (*declared)[f]) {
        fail(line_no, "feature index " + std::to_string(id) + " exceeds declared cardinality of field " +
                          std::to_string(f));
      }
      observed[f] = std::max(observed[f], static_cast<std::size_t>(id) + 1);
      rec.feature_ids.push_back(static_cast<std::uint32_t>(id));
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) throw DataError("no records");
  ds.meta = make_meta(declared ? *declared : observed, ds.records.size());
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  try {
    return parse_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out << kHeader;
  for (auto c : ds.meta.field_cardinalities) out << ' ' << c;
  out << '\n';
  for (const auto& r : ds.records) {
    out << r.label;
    for (auto id : r.feature_ids) out << ' ' << id;
    out << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  write_dataset(out, ds);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

constexpr std::uint64_t kSplitStream = 0x5711;
constexpr std::uint64_t kHalveStream = 0x4a1f;
constexpr std::uint64_t kBatchStream = 0xba7c;

}  // namespace

Splits split(const std::vector<Record>& records, const SplitSpec& spec) {
  const auto& r = spec.ratios;
  if (std::any_of(r.begin(), r.end(), [](double x) { return x < 0.0; }) ||
      std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-12) {
    throw DataError("split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = records.size();
  if (n < 3) throw DataError("split needs at least 3 records, got " + std::to_string(n));
  auto rng = make_rng(spec.seed, kSplitStream);
  const auto order = permutation(n, rng);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[0] + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[1] + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw DataError("split of " + std::to_string(n) + " records leaves an empty partition");
  }
  Splits out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.push_back(records[order[i]]);
  }
  return out;
}

std::pair<std::vector<Record>, std::vector<Record>> halve(const std::vector<Record>& train,
                                                          std::uint64_t seed) {
  if (train.size() < 2) throw DataError("halve needs at least 2 records");
  auto rng = make_rng(seed, kHalveStream);
  const auto order = permutation(train.size(), rng);
  const std::size_t first = (train.size() + 1) / 2;
  std::pair<std::vector<Record>, std::vector<Record>> out;
  out.first.reserve(first);
  out.second.reserve(train.size() - first);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < first ? out.first : out.second).push_back(train[order[i]]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed,
                                              std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    auto rng = make_rng(*shuffle_seed ^ kBatchStream, epoch);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const auto end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch make_batch(const std::vector<Record>& records, const std::vector<std::size_t>& indices) {
  Batch b;
  if (indices.empty()) return b;
  b.m = records.at(indices.front()).feature_ids.size();
  b.feature_ids.reserve(indices.size() * b.m);
  b.labels.reserve(indices.size());
  for (auto i : indices) {
    const auto& r = records.at(i);
    if (r.feature_ids.size() != b.m) throw DataError("record " + std::to_string(i) + " has wrong field count");
    b.feature_ids.insert(b.feature_ids.end(), r.feature_ids.begin(), r.feature_ids.end());
    b.labels.push_back(static_cast<double>(r.label));
    b.source_rows.push_back(i);
  }
  return b;
}

Batch make_batch(const std::vector<Record>& records) {
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(records, all);
}

Dataset synth_fm_dataset(const SynthSpec& spec) {
  if (spec.fields < 2) throw DataError("synth_fm_dataset needs at least 2 fields");
  if (spec.records < 1) throw DataError("synth_fm_dataset needs at least 1 record");
  if (spec.cardinality < 1 || spec.latent_dim < 1) throw DataError("synth_fm_dataset: empty field");
  const std::size_t m = spec.fields, card = spec.cardinality, d = spec.latent_dim;

  auto param_rng = make_rng(spec.seed, 1);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> latent(m * card * d);
  for (auto& v : latent) v = unit(param_rng);
  std::vector<double> linear(m * card);
  for (auto& v : linear) v = spec.linear_scale * unit(param_rng);

  auto record_rng = make_rng(spec.seed, 2);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(card - 1));
  Dataset ds;
  ds.records.resize(spec.records);
  std::vector<double> scores(spec.records);
  for (std::size_t r = 0; r < spec.records; ++r) {
    auto& ids = ds.records[r].feature_ids;
    ids.resize(m);
    for (auto& id : ids) id = pick(record_rng);
    double score = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double* vi = &latent[(i * card + ids[i]) * d];
      score += linear[i * card + ids[i]];
      for (std::size_t j = i + 1; j < m; ++j) {
        const double* vj = &latent[(j * card + ids[j]) * d];
        for (std::size_t c = 0; c < d; ++c) score += vi[c] * vj[c];
      }
    }
    scores[r] = score;
  }
  // Scores are rescaled by their spread so that `noise` is relative.
  double mu = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mu) * (s - mu);
  const double spread = std::sqrt(var / static_cast<double>(scores.size()));
  const double temperature = spread > 0.0 ? spread : 1.0;

  auto noise_rng = make_rng(spec.seed, 3);
  for (std::size_t r = 0; r < spec.records; ++r) {
    const double z = scores[r] / temperature + spec.noise * unit(noise_rng);
    // sigmoid(z) > 0.5 exactly when z > 0.
    ds.records[r].label = z > 0.0 ? 1 : 0;
  }
  ds.meta = make_meta(std::vector<std::size_t>(m, card), spec.records);
  return ds;
}

}  // namespace ctrnas::data
