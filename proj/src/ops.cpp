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

#include "ctrnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctrnas::ops {

namespace {

ad::Value normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kWeightInitStddev);
  std::vector<double> w(rows * cols);
  for (auto& v : w) v = dist(rng);
  return ad::Value::leaf({rows, cols}, std::move(w), true);
}

void require_feature_batch(const ad::Value& x, std::string_view op) {
  if (x.rank() != 3) {
    throw std::invalid_argument(std::string(op) + ": expected (B, m, k) input, got " +
                                ad::to_string(x.shape()));
  }
}

// Applies a (k, k) projection to every row of a (B, m, k) batch.
ad::Value project_rows(ad::Tape& t, const ad::Value& x, const ad::Value& w) {
  const auto batch = x.dim(0), m = x.dim(1), k = x.dim(2);
  auto flat = ad::reshape(t, x, {batch * m, k});
  return ad::reshape(t, ad::matmul(t, flat, w), {batch, m, w.dim(1)});
}

}  // namespace

std::string_view operator_name(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kSkip: return "skip";
    case OperatorKind::kSenet: return "senet";
    case OperatorKind::kSelfAttention: return "attention";
    case OperatorKind::kFm: return "fm";
    case OperatorKind::kSlp: return "slp";
    case OperatorKind::kConv1d: return "conv1d";
  }
  return "unknown";
}

std::optional<OperatorKind> parse_operator(std::string_view name) {
  for (auto k : kAllOperators) {
    if (operator_name(k) == name) return k;
  }
  return std::nullopt;
}

std::vector<OperatorKind> parse_operator_list(std::string_view list) {
  std::vector<bool> seen(kAllOperators.size(), false);
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto tok = list.substr(start, end - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) {
      const auto kind = parse_operator(tok);
      if (!kind) throw std::invalid_argument("unknown operator '" + std::string(tok) + "'");
      seen[static_cast<std::size_t>(*kind)] = true;
    }
    start = end + 1;
  }
  std::vector<OperatorKind> out;
  for (auto k : kAllOperators) {
    if (seen[static_cast<std::size_t>(k)]) out.push_back(k);
  }
  return out;
}

std::string format_operator_list(const std::vector<OperatorKind>& kinds) {
  std::string out;
  for (auto k : kinds) {
    if (!out.empty()) out += ',';
    out += operator_name(k);
  }
  return out;
}

std::size_t senet_hidden(std::size_t m) { return (m + 1) / 2; }

const ad::Value& OperatorParams::get(std::string_view name) const {
  for (const auto& [n, v] : trainables) {
    if (n == name) return v;
  }
  throw std::out_of_range(std::string(operator_name(kind)) + ": no parameter '" +
                          std::string(name) + "'");
}

ad::Value& OperatorParams::get(std::string_view name) {
  return const_cast<ad::Value&>(std::as_const(*this).get(name));
}

std::size_t OperatorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : trainables) n += v.size();
  return n;
}

OperatorParams init_operator(OperatorKind kind, std::size_t m, std::size_t k,
                             std::mt19937_64& rng) {
  OperatorParams p;
  p.kind = kind;
  switch (kind) {
    case OperatorKind::kSkip:
      break;
    case OperatorKind::kSenet: {
      const auto r = senet_hidden(m);
      p.trainables.emplace_back("W1", normal_matrix(m, r, rng));
      p.trainables.emplace_back("b1", ad::Value::zeros({r}, true));
      p.trainables.emplace_back("W2", normal_matrix(r, m, rng));
      p.trainables.emplace_back("b2", ad::Value::zeros({m}, true));
      break;
    }
    case OperatorKind::kSelfAttention:
      for (const char* name : {"Wq", "Wk", "Wv", "Wo"}) {
        p.trainables.emplace_back(name, normal_matrix(k, k, rng));
      }
      break;
    case OperatorKind::kFm:
      if (m < 2) throw std::invalid_argument("fm: needs at least 2 fields");
      p.trainables.emplace_back("W", normal_matrix(m * (m - 1) / 2, m * k, rng));
      break;
    case OperatorKind::kSlp:
      p.trainables.emplace_back("W", normal_matrix(m * k, m * k, rng));
      break;
    case OperatorKind::kConv1d:
      p.trainables.emplace_back("C", normal_matrix(m, m, rng));
      break;
  }
  return p;
}

ad::Value apply_skip(ad::Tape&, const ad::Value& x) { return x; }

ad::Value apply_senet(ad::Tape& t, const ad::Value& x, const OperatorParams& p) {
  require_feature_batch(x, "senet");
  auto z = ad::mean(t, x, 2);  // (B, m)
  auto h = ad::relu(t, ad::add(t, ad::matmul(t, z, p.get("W1")), p.get("b1")));
  auto a = ad::sigmoid(t, ad::add(t, ad::matmul(t, h, p.get("W2")), p.get("b2")));
  return ad::relu(t, ad::scale_rows(t, x, a));
}

ad::Value apply_attention(ad::Tape& t, const ad::Value& x, const OperatorParams& p) {
  require_feature_batch(x, "attention");
  const auto k = x.dim(2);
  auto q = project_rows(t, x, p.get("Wq"));
  auto key = project_rows(t, x, p.get("Wk"));
  auto v = project_rows(t, x, p.get("Wv"));
  auto scores = ad::scale(t, ad::bmm(t, q, key, /*transpose_b=*/true),
                          1.0 / std::sqrt(static_cast<double>(k)));
  auto attn = ad::softmax(t, scores, 2);
  return ad::relu(t, project_rows(t, ad::bmm(t, attn, v), p.get("Wo")));
}

ad::Value apply_fm(ad::Tape& t, const ad::Value& x, const OperatorParams& p) {
  require_feature_batch(x, "fm");
  if (x.dim(1) < 2) throw std::invalid_argument("fm: needs at least 2 fields");
  auto inner = ad::pairwise_inner(t, x);  // (B, m(m-1)/2)
  return ad::relu(t, ad::reshape(t, ad::matmul(t, inner, p.get("W")), x.shape()));
}

ad::Value apply_slp(ad::Tape& t, const ad::Value& x, const OperatorParams& p) {
  require_feature_batch(x, "slp");
  const auto batch = x.dim(0), m = x.dim(1), k = x.dim(2);
  auto flat = ad::reshape(t, x, {batch, m * k});
  return ad::relu(t, ad::reshape(t, ad::matmul(t, flat, p.get("W")), x.shape()));
}

ad::Value apply_conv1d(ad::Tape& t, const ad::Value& x, const OperatorParams& p) {
  require_feature_batch(x, "conv1d");
  return ad::relu(t, ad::field_mix(t, p.get("C"), x));
}

ad::Value apply_noisy_skip(ad::Tape& t, const ad::Value& x, double lambda, std::mt19937_64& rng) {
  if (lambda < 0.0) throw std::invalid_argument("noisy skip: lambda must be non-negative");
  if (lambda == 0.0) return x;
  const auto batch = x.dim(0);
  const auto n = x.size() / batch;
  const auto d = x.data();
  std::vector<double> noise(x.size(), 0.0);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += d[b * n + i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (d[b * n + i] - mu) * (d[b * n + i] - mu);
    const double sigma = lambda * std::sqrt(var / static_cast<double>(n));
    if (sigma == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) noise[b * n + i] = sigma * unit(rng);
  }
  return ad::add(t, x, ad::Value::leaf(x.shape(), std::move(noise)));
}

ad::Value apply(ad::Tape& t, const ad::Value& x, const OperatorParams& p) {
  switch (p.kind) {
    case OperatorKind::kSkip: return apply_skip(t, x);
    case OperatorKind::kSenet: return apply_senet(t, x, p);
    case OperatorKind::kSelfAttention: return apply_attention(t, x, p);
    case OperatorKind::kFm: return apply_fm(t, x, p);
    case OperatorKind::kSlp: return apply_slp(t, x, p);
    case OperatorKind::kConv1d: return apply_conv1d(t, x, p);
  }
  throw std::logic_error("apply: unknown operator");
}

}  // namespace ctrnas::ops
