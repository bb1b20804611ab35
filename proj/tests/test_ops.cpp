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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "ctrnas/ops.hpp"

namespace ad = ctrnas::ad;
namespace ops = ctrnas::ops;
namespace oracle = ctrnas::oracle;
using ops::OperatorKind;

namespace {

ad::Value matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                 bool requires_grad = false) {
  return ad::Value::leaf({rows, cols}, std::move(v), requires_grad);
}

ad::Value batch_of(std::size_t m, std::size_t k, std::vector<double> v) {
  return ad::Value::leaf({1, m, k}, std::move(v), true);
}

// Copies out the data so temporaries can be iterated safely.
std::vector<double> values(const ad::Value& v) { return v.data_vec(); }

void fill(ad::Value& v, double x) {
  for (auto& e : v.data()) e = x;
}

ad::Value identity(std::size_t n) {
  auto v = ad::Value::zeros({n, n}, true);
  for (std::size_t i = 0; i < n; ++i) v.data()[i * n + i] = 1.0;
  return v;
}

std::vector<double> relu(std::span<const double> x) {
  std::vector<double> out;
  for (double v : x) out.push_back(std::max(v, 0.0));
  return out;
}

}  // namespace

TEST_CASE("operator names round-trip") {
  for (auto kind : ops::kAllOperators) {
    CHECK(ops::parse_operator(ops::operator_name(kind)) == kind);
  }
  CHECK(!ops::parse_operator("none").has_value());
  CHECK(ops::parse_operator_list("fm,skip") ==
        std::vector<OperatorKind>{OperatorKind::kSkip, OperatorKind::kFm});
  CHECK(ops::format_operator_list({OperatorKind::kSkip, OperatorKind::kConv1d}) == "skip,conv1d");
  CHECK_THROWS(ops::parse_operator_list("skip,mlp"));
}

TEST_CASE("skip is the identity with no trainables") {
  std::mt19937_64 rng(0);
  auto p = ops::init_operator(OperatorKind::kSkip, 2, 2, rng);
  CHECK(p.trainables.empty());
  CHECK(!p.has_activation());
  auto x = batch_of(2, 2, {1, -2, 0, 3});
  ad::Tape t;
  auto y = ops::apply(t, ops::apply(t, x, p), p);
  CHECK(y.data_vec() == x.data_vec());
}

TEST_CASE("every operator preserves shape") {
  std::mt19937_64 rng(1);
  for (std::size_t m = 1; m <= 8; ++m) {
    for (std::size_t k = 1; k <= 8; ++k) {
      for (auto kind : ops::kAllOperators) {
        if (kind == OperatorKind::kFm && m < 2) {
          CHECK_THROWS(ops::init_operator(kind, m, k, rng));
          continue;
        }
        auto p = ops::init_operator(kind, m, k, rng);
        auto x = oracle::random_value({3, m, k}, rng);
        ad::Tape t(false);
        CHECK(ops::apply(t, x, p).shape() == ad::Shape{3, m, k});
      }
    }
  }
}

TEST_CASE("every trainable operator passes the gradient check") {
  for (auto kind : ops::kAllOperators) {
    for (int i = 0; i < 20; ++i) {
      std::mt19937_64 rng(200 + i);
      const std::size_t m = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      auto p = ops::init_operator(kind, m, k, rng);
      // Larger weights keep the ReLUs away from degenerate all-zero outputs.
      for (auto& [name, w] : p.trainables) {
        for (auto& v : w.data()) v *= 50.0;
      }
      auto x = oracle::random_value({2, m, k}, rng);
      auto f = [&](ad::Tape& t) { return oracle::project(t, ops::apply(t, x, p), i); };
      INFO(ops::operator_name(kind) << " instance " << i);
      CHECK(oracle::max_grad_error(f, x) < 1e-4);
      for (auto& [name, w] : p.trainables) {
        INFO("parameter " << name);
        CHECK(oracle::max_grad_error(f, w) < 1e-4);
      }
    }
  }
}

TEST_CASE("senet with unit excitation is relu") {
  std::mt19937_64 rng(2);
  auto p = ops::init_operator(OperatorKind::kSenet, 2, 2, rng);
  CHECK(p.get("W1").shape() == ad::Shape{2, 1});
  fill(p.get("W2"), 0.0);
  fill(p.get("b2"), 60.0);
  auto x = batch_of(2, 2, {1, -2, 0.5, 3});
  ad::Tape t(false);
  auto y = ops::apply(t, x, p);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(y.data()[i] == doctest::Approx(relu(x.data())[i]));
  }
  fill(p.get("b2"), -800.0);
  for (double v : values(ops::apply(t, x, p))) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("attention over a single field") {
  std::mt19937_64 rng(3);
  const std::size_t k = 3;
  auto p = ops::init_operator(OperatorKind::kSelfAttention, 1, k, rng);
  for (auto& [name, w] : p.trainables) {
    for (auto& v : w.data()) v *= 100.0;
  }
  auto x = oracle::random_value({1, 1, k}, rng);
  ad::Tape t(false);
  auto y = ops::apply(t, x, p);
  auto expected = ad::relu(t, ad::matmul(t, ad::matmul(t, ad::reshape(t, x, {1, k}), p.get("Wv")),
                                         p.get("Wo")));
  for (std::size_t c = 0; c < k; ++c) CHECK(y.data()[c] == doctest::Approx(expected.data()[c]));
  for (auto& [name, w] : p.trainables) fill(w, 0.0);
  for (double v : values(ops::apply(t, x, p))) CHECK(v == 0.0);
}

TEST_CASE("fm of a two-field example") {
  std::mt19937_64 rng(4);
  auto p = ops::init_operator(OperatorKind::kFm, 2, 2, rng);
  CHECK(p.get("W").shape() == ad::Shape{1, 4});
  fill(p.get("W"), 1.0);
  auto x = batch_of(2, 2, {1, 2, 3, 4});
  ad::Tape t(false);
  CHECK(ad::pairwise_inner(t, x).data_vec() == std::vector<double>{11.0});
  for (double v : values(ops::apply(t, x, p))) CHECK(v == 11.0);
  auto zero = batch_of(2, 2, {0, 0, 0, 0});
  for (double v : values(ops::apply(t, zero, p))) CHECK(v == 0.0);
}

TEST_CASE("slp with identity weights is relu") {
  std::mt19937_64 rng(5);
  auto p = ops::init_operator(OperatorKind::kSlp, 3, 2, rng);
  p.get("W") = identity(6);
  auto x = oracle::random_value({1, 3, 2}, rng);
  ad::Tape t(false);
  CHECK(ops::apply(t, x, p).data_vec() == relu(x.data()));
  fill(p.get("W"), 0.0);
  for (double v : values(ops::apply(t, x, p))) CHECK(v == 0.0);
}

TEST_CASE("conv1d mixes fields") {
  std::mt19937_64 rng(6);
  auto p = ops::init_operator(OperatorKind::kConv1d, 3, 2, rng);
  p.get("C") = identity(3);
  auto x = batch_of(3, 2, {1, -1, 2, -2, 3, -3});
  ad::Tape t(false);
  CHECK(ops::apply(t, x, p).data_vec() == relu(x.data()));
  // Row 0 selects field 2.
  p.get("C") = matrix(3, 3, {0, 0, 1, 0, 1, 0, 1, 0, 0}, true);
  const auto y = ops::apply(t, x, p);
  CHECK(y.data()[0] == 3.0);
  CHECK(y.data()[1] == 0.0);
}

TEST_CASE("noisy skip degenerates to identity") {
  std::mt19937_64 rng(7);
  auto x = oracle::random_value({4, 3, 2}, rng);
  ad::Tape t;
  CHECK(ops::apply_noisy_skip(t, x, 0.0, rng).data_vec() == x.data_vec());
  auto c = ad::Value::leaf({1, 2, 2}, {5, 5, 5, 5});
  CHECK(ops::apply_noisy_skip(t, c, 0.03, rng).data_vec() == c.data_vec());
}

TEST_CASE("noisy skip adds zero-mean noise with gradient one") {
  std::mt19937_64 rng(8);
  const std::size_t b = 10000, m = 10, k = 10;
  auto x = oracle::random_value({b, m, k}, rng);
  ad::Tape t;
  auto y = ops::apply_noisy_skip(t, x, 0.03, rng);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y.data()[i] - x.data()[i];
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(y.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(sd == doctest::Approx(0.03).epsilon(0.05));
  CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(n));
  auto loss = ad::sum_all(t, y);
  t.backward(loss);
  CHECK(std::all_of(x.grad().begin(), x.grad().end(), [](double g) { return g == 1.0; }));
}
