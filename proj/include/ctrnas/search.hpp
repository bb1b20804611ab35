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

#ifndef CTRNAS_SEARCH_HPP_
#define CTRNAS_SEARCH_HPP_

// First-order bi-level search over the supernet.
//
// Each epoch interleaves one architecture step on a batch of the arch half
// with one weight step on a batch of the weights half. Architecture snapshots
// (arch.json) hold the op space, temperature, and alpha/beta values:
//
//   {"format": "ctrnas-arch", "version": 1, "ops": ["skip", ...], "tau": 1,
//    "interaction": {"intermediate": 4, "alpha": [[...], ...], "beta": [[...], ...]},
//    "ensemble": {...}}

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "ctrnas/cells.hpp"
#include "ctrnas/data.hpp"
#include "ctrnas/model.hpp"
#include "ctrnas/optim.hpp"
#include "ctrnas/trainer.hpp"

namespace ctrnas::search {

// (1 + ln T) / (1 + ln t) for 1 <= t <= T.
double anneal_tau(int total_epochs, int epoch);

struct SearchConfig {
  int epochs = 50;
  std::size_t batch_size = 4096;
  double w_lr = 0.025;
  double w_lr_min = 0.0;
  double w_momentum = 0.9;
  double w_weight_decay = 0.0;
  optim::Adam::Options arch{3e-4, 0.5, 0.999, 1e-8, 1e-3};
  bool anneal = true;
  double noisy_lambda = 0.0;
  std::uint64_t seed = 0;
  // Unset: 5 epochs, or disabled when epochs <= 5. 0 disables.
  std::optional<int> patience;
  trainer::EvalOptions eval{};
  bool record_timing = false;

  int effective_patience() const;
  void validate() const;
};

struct SearchState {
  int epoch = 0;
  double tau = 1.0;
  double best_val_logloss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  cells::ArchParams best_arch;
};

struct EpochStats {
  double train_logloss = 0.0;
  std::size_t arch_steps = 0;
  std::size_t weight_steps = 0;
};

// Owns the two optimizers so their state carries across epochs.
class BilevelOptimizer {
 public:
  BilevelOptimizer(model::SuperNet& net, const SearchConfig& config);

  // Advances state.epoch, sets the temperature and runs one epoch.
  EpochStats run_epoch(const std::vector<data::Record>& weights_half,
                       const std::vector<data::Record>& arch_half, SearchState& state);

  // Single updates; each freezes the other partition while it runs. epoch
  // and index only label diagnostics. Return the batch loss.
  double arch_step(const data::Batch& batch, int epoch = 0, std::size_t index = 0);
  double weight_step(const data::Batch& batch, int epoch = 0, std::size_t index = 0);

 private:
  model::SuperNet& net_;
  SearchConfig config_;
  std::vector<ad::Value> weights_;
  std::vector<ad::Value> arch_;
  optim::MomentumSgd w_opt_;
  optim::Adam a_opt_;
  std::mt19937_64 noise_rng_;
};

struct SearchLogRow {
  int epoch = 0;
  double tau = 1.0;
  double train_logloss = 0.0;
  double val_logloss = 0.0;
  double val_auc = 0.0;
  double seconds = 0.0;
};

struct SearchResult {
  cells::ArchParams best_arch;
  int best_epoch = 0;
  double best_val_logloss = 0.0;
  std::vector<SearchLogRow> log;
};

// Halves `train` by seed, then runs up to config.epochs epochs, snapshotting
// alpha/beta whenever the validation logloss improves.
SearchResult run_search(model::SuperNet& net, const std::vector<data::Record>& train,
                        const std::vector<data::Record>& val, const SearchConfig& config);

void write_search_log(std::ostream& out, const std::vector<SearchLogRow>& log);

void save_arch(const cells::ArchParams& arch, const std::filesystem::path& path);
cells::ArchParams load_arch(const std::filesystem::path& path);
// Cell layouts implied by a snapshot.
cells::CellSpec interaction_spec(const cells::ArchParams& arch);
cells::CellSpec ensemble_spec(const cells::ArchParams& arch);

}  // namespace ctrnas::search

#endif  // CTRNAS_SEARCH_HPP_
