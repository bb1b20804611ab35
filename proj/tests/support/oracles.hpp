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

#ifndef CTRNAS_TESTS_ORACLES_HPP_
#define CTRNAS_TESTS_ORACLES_HPP_

// Reference implementations used as test oracles. None of them share code
// with the library beyond the data types.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ctrnas/autodiff.hpp"
#include "ctrnas/data.hpp"
#include "ctrnas/genotype.hpp"
#include "ctrnas/ops.hpp"

namespace ctrnas::oracle {

// O(n^2) pair-counting AUC; ties count one half.
double pairwise_auc(std::span<const double> labels, std::span<const double> scores);

struct LinearFitOptions {
  int epochs = 20;
  std::size_t batch_size = 256;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

// Logistic regression on one-hot features trained by mini-batch SGD.
// Returns test-set click probabilities.
std::vector<double> logistic_regression(const data::DatasetMeta& meta,
                                        const std::vector<data::Record>& train,
                                        const std::vector<data::Record>& test,
                                        const LinearFitOptions& options);

struct FmFitOptions {
  int epochs = 30;
  std::size_t batch_size = 256;
  double lr = 0.2;
  std::size_t factors = 8;
  double init_stddev = 0.1;
  std::uint64_t seed = 0;
};

// Second-order factorization machine trained by mini-batch SGD.
std::vector<double> factorization_machine(const data::DatasetMeta& meta,
                                          const std::vector<data::Record>& train,
                                          const std::vector<data::Record>& test,
                                          const FmFitOptions& options);

std::vector<double> labels_of(const std::vector<data::Record>& records);

// Exhaustive discretization of one node: over every assignment of distinct
// predecessors to operators of size min(k, predecessors), the one with the
// largest total strength, ties resolved by the lexicographically smallest
// (descending strength, predecessor, operator) key. Strongest edge first.
std::vector<genotype::GenotypeEdge> brute_force_select(
    const std::vector<std::vector<double>>& alphas, const std::vector<double>& beta,
    const std::vector<ops::OperatorKind>& op_space, std::size_t k_retain);

// Plain softmax on doubles.
std::vector<double> softmax(std::span<const double> x);

// Central-difference check of d f / d input for a scalar-valued f, where the
// forward is rebuilt on a fresh tape for every evaluation. Returns the
// largest |g - fd| / max(|g|, |fd|, floor).
double max_grad_error(const std::function<ad::Value(ad::Tape&)>& f, ad::Value& input,
                      double eps = 1e-6, double floor = 1e-3);

// Projects a tensor-valued output to a scalar with fixed random weights so a
// gradient check covers every output coordinate.
ad::Value project(ad::Tape& t, const ad::Value& y, std::uint64_t seed);

ad::Value random_value(const ad::Shape& shape, std::mt19937_64& rng, double stddev = 1.0,
                       bool requires_grad = true);

}  // namespace ctrnas::oracle

#endif  // CTRNAS_TESTS_ORACLES_HPP_
