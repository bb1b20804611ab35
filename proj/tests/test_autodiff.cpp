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

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "ctrnas/autodiff.hpp"

namespace ad = ctrnas::ad;
namespace oracle = ctrnas::oracle;

namespace {

constexpr int kInstances = 20;
constexpr double kTolerance = 1e-4;

using Builder = std::function<ad::Value(ad::Tape&, const std::vector<ad::Value>&)>;

// Checks the gradient of a projected `op` against every input that requires
// gradients.
double worst_error(const Builder& op, std::vector<ad::Value> inputs, std::uint64_t seed) {
  double worst = 0.0;
  for (auto& in : inputs) {
    if (!in.requires_grad()) continue;
    auto f = [&](ad::Tape& t) { return oracle::project(t, op(t, inputs), seed); };
    worst = std::max(worst, oracle::max_grad_error(f, in));
  }
  return worst;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void check_all(const char* name,
               const std::function<std::pair<Builder, std::vector<ad::Value>>(std::mt19937_64&)>&
                   make) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 rng(1000 + i);
    auto [op, inputs] = make(rng);
    INFO(name << " instance " << i);
    CHECK(worst_error(op, inputs, 77 + i) < kTolerance);
  }
}

}  // namespace

TEST_CASE("elementwise primitives match finite differences") {
  check_all("add", [](auto& rng) {
    const auto b = pick(rng, 1, 8), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{Builder([](ad::Tape& t, const auto& in) { return ad::add(t, in[0], in[1]); }),
                     std::vector{oracle::random_value({b, m, k}, rng),
                                 oracle::random_value({m, k}, rng)}};
  });
  check_all("mul", [](auto& rng) {
    const auto m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{Builder([](ad::Tape& t, const auto& in) { return ad::mul(t, in[0], in[1]); }),
                     std::vector{oracle::random_value({m, k}, rng),
                                 oracle::random_value({m, k}, rng)}};
  });
  check_all("scale", [](auto& rng) {
    const auto m = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::scale(t, in[0], -1.7); }),
        std::vector{oracle::random_value({m}, rng)}};
  });
  check_all("relu", [](auto& rng) {
    const auto m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{Builder([](ad::Tape& t, const auto& in) { return ad::relu(t, in[0]); }),
                     std::vector{oracle::random_value({m, k}, rng)}};
  });
  check_all("sigmoid", [](auto& rng) {
    const auto m = pick(rng, 1, 8);
    return std::pair{Builder([](ad::Tape& t, const auto& in) { return ad::sigmoid(t, in[0]); }),
                     std::vector{oracle::random_value({m}, rng, 2.0)}};
  });
  check_all("exp", [](auto& rng) {
    const auto m = pick(rng, 1, 8);
    return std::pair{Builder([](ad::Tape& t, const auto& in) { return ad::exp(t, in[0]); }),
                     std::vector{oracle::random_value({m}, rng)}};
  });
  check_all("log", [](auto& rng) {
    const auto m = pick(rng, 1, 8);
    auto x = oracle::random_value({m}, rng);
    for (auto& v : x.data()) v = 0.5 + std::abs(v);
    return std::pair{Builder([](ad::Tape& t, const auto& in) { return ad::log(t, in[0]); }),
                     std::vector{x}};
  });
}

TEST_CASE("linear algebra primitives match finite differences") {
  check_all("matmul", [](auto& rng) {
    const auto n = pick(rng, 1, 8), p = pick(rng, 1, 8), q = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::matmul(t, in[0], in[1]); }),
        std::vector{oracle::random_value({n, p}, rng), oracle::random_value({p, q}, rng)}};
  });
  check_all("bmm", [](auto& rng) {
    const auto b = pick(rng, 1, 4), n = pick(rng, 1, 8), p = pick(rng, 1, 8),
               q = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::bmm(t, in[0], in[1]); }),
        std::vector{oracle::random_value({b, n, p}, rng), oracle::random_value({b, p, q}, rng)}};
  });
  check_all("bmm transposed", [](auto& rng) {
    const auto b = pick(rng, 1, 4), n = pick(rng, 1, 8), p = pick(rng, 1, 8),
               q = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::bmm(t, in[0], in[1], true); }),
        std::vector{oracle::random_value({b, n, p}, rng), oracle::random_value({b, q, p}, rng)}};
  });
  check_all("field_mix", [](auto& rng) {
    const auto b = pick(rng, 1, 4), r = pick(rng, 1, 8), m = pick(rng, 1, 8),
               k = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::field_mix(t, in[0], in[1]); }),
        std::vector{oracle::random_value({r, m}, rng), oracle::random_value({b, m, k}, rng)}};
  });
  check_all("pairwise_inner", [](auto& rng) {
    const auto b = pick(rng, 1, 4), m = pick(rng, 2, 8), k = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::pairwise_inner(t, in[0]); }),
        std::vector{oracle::random_value({b, m, k}, rng)}};
  });
  check_all("scale_rows", [](auto& rng) {
    const auto b = pick(rng, 1, 4), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::scale_rows(t, in[0], in[1]); }),
        std::vector{oracle::random_value({b, m, k}, rng), oracle::random_value({b, m}, rng)}};
  });
}

TEST_CASE("reductions and normalizations match finite differences") {
  for (std::size_t axis = 0; axis < 3; ++axis) {
    check_all("softmax", [axis](auto& rng) {
      const auto b = pick(rng, 1, 4), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
      return std::pair{
          Builder([axis](ad::Tape& t, const auto& in) { return ad::softmax(t, in[0], axis); }),
          std::vector{oracle::random_value({b, m, k}, rng)}};
    });
    check_all("sum", [axis](auto& rng) {
      const auto b = pick(rng, 1, 4), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
      return std::pair{
          Builder([axis](ad::Tape& t, const auto& in) { return ad::sum(t, in[0], axis); }),
          std::vector{oracle::random_value({b, m, k}, rng)}};
    });
    check_all("mean", [axis](auto& rng) {
      const auto b = pick(rng, 1, 4), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
      return std::pair{
          Builder([axis](ad::Tape& t, const auto& in) { return ad::mean(t, in[0], axis); }),
          std::vector{oracle::random_value({b, m, k}, rng)}};
    });
  }
  check_all("batch_norm", [](auto& rng) {
    const auto b = pick(rng, 2, 6), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::batch_norm(t, in[0]); }),
        std::vector{oracle::random_value({b, m, k}, rng)}};
  });
  check_all("rms_normalize", [](auto& rng) {
    const auto b = pick(rng, 1, 4), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{
        Builder([](ad::Tape& t, const auto& in) { return ad::rms_normalize(t, in[0]); }),
        std::vector{oracle::random_value({b, m, k}, rng)}};
  });
  check_all("weighted_sum", [](auto& rng) {
    const auto n = pick(rng, 1, 5), m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    std::vector<ad::Value> in;
    for (std::size_t i = 0; i < n; ++i) in.push_back(oracle::random_value({2, m, k}, rng));
    in.push_back(oracle::random_value({n}, rng));
    return std::pair{Builder([](ad::Tape& t, const auto& v) {
                       std::vector<ad::Value> xs(v.begin(), v.end() - 1);
                       return ad::weighted_sum(t, xs, v.back());
                     }),
                     in};
  });
  check_all("concat", [](auto& rng) {
    const auto b = pick(rng, 1, 4), p = pick(rng, 1, 8), q = pick(rng, 1, 8);
    return std::pair{Builder([](ad::Tape& t, const auto& in) {
                       return ad::concat(t, {in[0], in[1]}, 1);
                     }),
                     std::vector{oracle::random_value({b, p}, rng),
                                 oracle::random_value({b, q}, rng)}};
  });
  check_all("reshape", [](auto& rng) {
    const auto m = pick(rng, 1, 8), k = pick(rng, 1, 8);
    return std::pair{Builder([m, k](ad::Tape& t, const auto& in) {
                       return ad::reshape(t, in[0], {m * k});
                     }),
                     std::vector{oracle::random_value({m, k}, rng)}};
  });
  check_all("gather_rows", [](auto& rng) {
    const auto v = pick(rng, 1, 8), k = pick(rng, 1, 8), n = pick(rng, 1, 8);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng, 0, v - 1);
    return std::pair{Builder([idx](ad::Tape& t, const auto& in) {
                       return ad::gather_rows(t, in[0], idx);
                     }),
                     std::vector{oracle::random_value({v, k}, rng)}};
  });
}

TEST_CASE("binary cross-entropy matches finite differences") {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 rng(500 + i);
    const auto b = pick(rng, 1, 8);
    std::vector<double> labels(b);
    for (auto& y : labels) y = static_cast<double>(pick(rng, 0, 1));
    std::vector<double> p(b);
    for (auto& v : p) v = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    auto prob = ad::Value::leaf({b}, p, true);
    auto f = [&](ad::Tape& t) { return ad::binary_cross_entropy(t, prob, labels); };
    CHECK(oracle::max_grad_error(f, prob) < kTolerance);
  }
}

TEST_CASE("logit gradient of the loss is the residual") {
  std::vector<double> labels{1.0, 0.0, 1.0};
  auto z = ad::Value::leaf({3}, {0.3, -1.2, 2.0}, true);
  ad::Tape t;
  auto loss = ad::binary_cross_entropy(t, ad::sigmoid(t, z), labels);
  t.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z.data()[i]));
    CHECK(z.grad()[i] == doctest::Approx((p - labels[i]) / 3.0).epsilon(1e-9));
  }
}

TEST_CASE("softmax of log-spaced logits") {
  auto x = ad::Value::leaf({3}, {0.0, std::log(2.0), std::log(4.0)});
  ad::Tape t(false);
  auto y = ad::softmax(t, x, 0);
  CHECK(y.data()[0] == doctest::Approx(1.0 / 7.0));
  CHECK(y.data()[1] == doctest::Approx(2.0 / 7.0));
  CHECK(y.data()[2] == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("leaf gradients accumulate until reset") {
  auto x = ad::Value::leaf({2}, {1.0, 2.0}, true);
  for (int pass = 0; pass < 2; ++pass) {
    ad::Tape t;
    auto loss = ad::sum_all(t, ad::mul(t, x, x));
    t.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(8.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("frozen inputs receive no gradient") {
  auto x = ad::Value::leaf({2}, {1.0, 2.0}, true);
  auto w = ad::Value::leaf({2}, {3.0, 4.0}, false);
  ad::Tape t;
  auto loss = ad::sum_all(t, ad::mul(t, x, w));
  t.backward(loss);
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  for (double g : w.grad()) CHECK(g == 0.0);
}

TEST_CASE("relu has zero gradient at zero") {
  auto x = ad::Value::leaf({3}, {-1.0, 0.0, 1.0}, true);
  ad::Tape t;
  auto loss = ad::sum_all(t, ad::relu(t, x));
  t.backward(loss);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("shape mismatches are reported") {
  ad::Tape t;
  auto a = ad::Value::zeros({2, 3});
  auto b = ad::Value::zeros({2, 4});
  CHECK_THROWS_AS(ad::add(t, a, b), ad::ShapeError);
  CHECK_THROWS_AS(ad::matmul(t, a, a), ad::ShapeError);
  CHECK_THROWS_AS(ad::concat(t, {ad::Value::zeros({2}), a}, 0), ad::ShapeError);
}

TEST_CASE("backward requires a scalar loss") {
  auto x = ad::Value::leaf({2}, {1.0, 2.0}, true);
  ad::Tape t;
  auto y = ad::mul(t, x, x);
  CHECK_THROWS_AS(t.backward(y), ad::BackwardError);
}

TEST_CASE("non-recording tape keeps nothing") {
  auto x = ad::Value::leaf({2}, {1.0, 2.0}, true);
  ad::Tape t(false);
  auto y = ad::mul(t, x, x);
  CHECK(t.size() == 0);
  CHECK(y.data()[1] == 4.0);
}
