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

#ifndef CTRNAS_CONFIG_HPP_
#define CTRNAS_CONFIG_HPP_

// Run configuration shared by all subcommands.
//
// Config files are JSON objects. Every section and key is optional; missing
// keys keep their defaults and unknown keys are rejected. The full schema with
// defaults:
//
//   {
//     "seed": 0, "threads": 1, "out": "out", "timing": false,
//     "data": {
//       "path": null,                      // dataset file; null = synthesize
//       "split": [0.8, 0.1, 0.1],
//       "synth": {"fields": 4, "cardinality": 16, "records": 50000,
//                 "latent_dim": 4, "noise": 0.1, "linear_scale": 1.0}
//     },
//     "model": {"k": 10, "nodes": 4, "ops": "skip,senet,attention,fm,slp,conv1d",
//               "node_norm": "rms", "k_retain": 2},
//     "search": {"epochs": 50, "batch_size": 4096, "w_lr": 0.025, "w_lr_min": 0.0,
//                "w_momentum": 0.9, "w_weight_decay": 0.0, "arch_lr": 0.0003,
//                "arch_beta1": 0.5, "arch_beta2": 0.999, "arch_eps": 1e-08,
//                "arch_weight_decay": 0.001, "anneal": true, "noisy_lambda": 0.0,
//                "patience": null},
//     "train": {"epochs": 30, "batch_size": 4096, "lr": 0.001, "beta1": 0.9,
//               "beta2": 0.999, "eps": 1e-08, "weight_decay": 0.0, "patience": 5},
//     "eval": {"batch_size": 4096},
//     "ablate": {"grids": ["techniques", "ops"], "noisy_lambda": 0.03}
//   }
//
// The synthetic dataset and the split are both drawn from "seed".

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrnas/cells.hpp"
#include "ctrnas/data.hpp"
#include "ctrnas/model.hpp"
#include "ctrnas/ops.hpp"
#include "ctrnas/search.hpp"
#include "ctrnas/trainer.hpp"

namespace ctrnas::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthSection {
  std::size_t fields = 4;
  std::size_t cardinality = 16;
  std::size_t records = 50000;
  std::size_t latent_dim = 4;
  double noise = 0.1;
  double linear_scale = 1.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
  bool timing = false;

  std::optional<std::string> data_path;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  SynthSection synth;

  std::size_t k = 10;
  std::size_t nodes = 4;
  std::vector<ops::OperatorKind> ops{ops::kAllOperators.begin(), ops::kAllOperators.end()};
  cells::NodeNorm node_norm = cells::NodeNorm::kRms;
  std::size_t k_retain = 2;

  int search_epochs = 50;
  std::size_t search_batch_size = 4096;
  double w_lr = 0.025;
  double w_lr_min = 0.0;
  double w_momentum = 0.9;
  double w_weight_decay = 0.0;
  double arch_lr = 3e-4;
  double arch_beta1 = 0.5;
  double arch_beta2 = 0.999;
  double arch_eps = 1e-8;
  double arch_weight_decay = 1e-3;
  bool anneal = true;
  double noisy_lambda = 0.0;
  std::optional<int> search_patience;

  int train_epochs = 30;
  std::size_t train_batch_size = 4096;
  double train_lr = 1e-3;
  double train_beta1 = 0.9;
  double train_beta2 = 0.999;
  double train_eps = 1e-8;
  double train_weight_decay = 0.0;
  int train_patience = 5;

  std::size_t eval_batch_size = 4096;

  std::vector<std::string> ablate_grids{"techniques", "ops"};
  double ablate_noisy_lambda = 0.03;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  data::SynthSpec synth_spec() const;
  data::SplitSpec split_spec() const;
  model::ModelConfig model_config() const;
  search::SearchConfig search_config() const;
  trainer::TrainConfig train_config() const;
  trainer::EvalOptions eval_options() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& c, const std::filesystem::path& path);

// Parses a comma-separated operator list; the result must contain skip.
std::vector<ops::OperatorKind> parse_op_space(const std::string& list);

}  // namespace ctrnas::config

#endif  // CTRNAS_CONFIG_HPP_
