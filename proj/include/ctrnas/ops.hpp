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

#ifndef CTRNAS_OPS_HPP_
#define CTRNAS_OPS_HPP_

// Interaction operators. Each maps a batch of m x k feature matrices, shaped
// (B, m, k), to a batch of the same shape. Every operator except Skip ends
// in a ReLU.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctrnas/autodiff.hpp"

namespace ctrnas::ops {

enum class OperatorKind : std::uint8_t { kSkip, kSenet, kSelfAttention, kFm, kSlp, kConv1d };

inline constexpr std::array<OperatorKind, 6> kAllOperators = {
    OperatorKind::kSkip, OperatorKind::kSenet, OperatorKind::kSelfAttention,
    OperatorKind::kFm,   OperatorKind::kSlp,   OperatorKind::kConv1d};

// Stable lowercase names used in files and on the command line:
// skip, senet, attention, fm, slp, conv1d.
std::string_view operator_name(OperatorKind kind);
std::optional<OperatorKind> parse_operator(std::string_view name);

// Parses a comma-separated list such as "skip,fm". Order follows the
// canonical operator order regardless of input order.
std::vector<OperatorKind> parse_operator_list(std::string_view list);
std::string format_operator_list(const std::vector<OperatorKind>& kinds);

// SENET bottleneck width, ceil(m / 2).
std::size_t senet_hidden(std::size_t m);

struct OperatorParams {
  OperatorKind kind = OperatorKind::kSkip;
  std::vector<std::pair<std::string, ad::Value>> trainables;

  bool has_activation() const { return kind != OperatorKind::kSkip; }
  const ad::Value& get(std::string_view name) const;
  ad::Value& get(std::string_view name);
  std::size_t parameter_count() const;
};

inline constexpr double kWeightInitStddev = 0.01;

// Weight matrices ~ normal(0, 0.01); biases zero.
OperatorParams init_operator(OperatorKind kind, std::size_t m, std::size_t k, std::mt19937_64& rng);

ad::Value apply_skip(ad::Tape& t, const ad::Value& x);
ad::Value apply_senet(ad::Tape& t, const ad::Value& x, const OperatorParams& p);
ad::Value apply_attention(ad::Tape& t, const ad::Value& x, const OperatorParams& p);
ad::Value apply_fm(ad::Tape& t, const ad::Value& x, const OperatorParams& p);
ad::Value apply_slp(ad::Tape& t, const ad::Value& x, const OperatorParams& p);
ad::Value apply_conv1d(ad::Tape& t, const ad::Value& x, const OperatorParams& p);

// Skip plus Gaussian noise: per sample, each entry gets normal(0, sigma) with
// sigma = lambda * std(x_b) over that sample's m*k entries. The noise is a
// constant with respect to differentiation.
ad::Value apply_noisy_skip(ad::Tape& t, const ad::Value& x, double lambda, std::mt19937_64& rng);

ad::Value apply(ad::Tape& t, const ad::Value& x, const OperatorParams& p);

}  // namespace ctrnas::ops

#endif  // CTRNAS_OPS_HPP_
