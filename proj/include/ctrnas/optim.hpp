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

#ifndef CTRNAS_OPTIM_HPP_
#define CTRNAS_OPTIM_HPP_

#include <vector>

#include "ctrnas/autodiff.hpp"

namespace ctrnas::optim {

// Heavy-ball SGD: v <- mu * v + (g + wd * p); p <- p - lr * v.
class MomentumSgd {
 public:
  MomentumSgd(std::vector<ad::Value> params, double lr, double momentum, double weight_decay = 0.0);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<ad::Value> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
};

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam(std::vector<ad::Value> params, Options options);

  void step();
  void zero_grad();
  const Options& options() const { return options_; }

 private:
  std::vector<ad::Value> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  Options options_;
  long steps_ = 0;
};

// Cosine decay from base to floor over total epochs; epoch is 0-based.
double cosine_lr(double base, double floor, int epoch, int total);

}  // namespace ctrnas::optim

#endif  // CTRNAS_OPTIM_HPP_
