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

#ifndef CTRNAS_TRAINER_HPP_
#define CTRNAS_TRAINER_HPP_

// Retraining of derived networks and the evaluation metrics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrnas/data.hpp"
#include "ctrnas/model.hpp"
#include "ctrnas/optim.hpp"

namespace ctrnas::trainer {

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank-based (Mann-Whitney) area under the ROC curve; tied scores share
// their average rank. Throws if either class is absent.
double auc(std::span<const double> labels, std::span<const double> scores);

struct EvalOptions {
  std::size_t batch_size = 4096;
  // Batches are split across this many threads; results do not depend on it.
  int threads = 1;
};

struct EvalReport {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n = 0;
};

// Click probabilities for every record, in order, with noise disabled. For
// networks normalizing with batch statistics a trailing single-record batch is
// merged into the previous one.
std::vector<double> predict_all(const model::Network& net, const std::vector<data::Record>& records,
                                const EvalOptions& options = {});
EvalReport evaluate(const model::Network& net, const std::vector<data::Record>& records,
                    const EvalOptions& options = {});

// {"auc": ..., "logloss": ..., "n": ...}
std::string report_text(const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

// Tracks the best validation loss; stop once `patience` epochs pass without
// strict improvement. patience = 0 never stops.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Records the loss of `epoch` (1-based); returns true on improvement.
  bool update(int epoch, double loss);
  bool should_stop(int epoch) const;
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 4096;
  optim::Adam::Options adam{};
  int patience = 5;
  std::uint64_t seed = 0;
  EvalOptions eval{};
  bool record_timing = false;
};

struct TrainLogRow {
  int epoch = 0;
  double train_logloss = 0.0;
  double val_logloss = 0.0;
  double val_auc = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  EvalReport best_val;
  int best_epoch = 0;
  std::vector<TrainLogRow> log;
  // Textual state of the shuffling engine after the last epoch.
  std::string rng_state;
};

// Minimizes the logloss of `net` on `train` with Adam, evaluating on `val`
// after each epoch. On return the net holds the weights of the best epoch.
TrainResult train_derived(model::DerivedNet& net, const std::vector<data::Record>& train,
                          const std::vector<data::Record>& val, const TrainConfig& config);

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log);

// Fixed-precision text used in every CSV and report.
std::string format_real(double v);

}  // namespace ctrnas::trainer

#endif  // CTRNAS_TRAINER_HPP_
