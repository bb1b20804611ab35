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

#include "ctrnas/optim.hpp"

#include <cmath>
#include <numbers>

namespace ctrnas::optim {

MomentumSgd::MomentumSgd(std::vector<ad::Value> params, double lr, double momentum,
                         double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void MomentumSgd::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].data();
    const auto grad = params_[k].grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      v[i] = momentum_ * v[i] + grad[i] + weight_decay_ * data[i];
      data[i] -= lr_ * v[i];
    }
  }
}

void MomentumSgd::zero_grad() { ad::zero_grads(params_); }

Adam::Adam(std::vector<ad::Value> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const auto& o = options_;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].data();
    const auto grad = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i] + o.weight_decay * data[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      data[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
    }
  }
}

void Adam::zero_grad() { ad::zero_grads(params_); }

double cosine_lr(double base, double floor, int epoch, int total) {
  if (total <= 0) return base;
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(phase));
}

}  // namespace ctrnas::optim
