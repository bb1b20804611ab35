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

#include "ctrnas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace ctrnas::trainer {

namespace {

constexpr std::uint64_t kShuffleStream = 0x7a11;

std::vector<std::vector<std::size_t>> eval_batches(std::size_t n, std::size_t batch_size,
                                                   bool merge_singleton) {
  auto out = data::batches(n, batch_size, std::nullopt);
  if (merge_singleton && out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

double auc(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw std::invalid_argument("auc: " + std::to_string(labels.size()) + " labels vs " +
                                std::to_string(scores.size()) + " scores");
  }
  const auto n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t r = i; r < j; ++r) {
      if (labels[order[r]] > 0.5) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("auc undefined: labels contain a single class");
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

std::vector<double> predict_all(const model::Network& net, const std::vector<data::Record>& records,
                                const EvalOptions& options) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty split");
  if (options.batch_size < 1) throw std::invalid_argument("evaluate: batch size must be positive");
  if (net.uses_batch_statistics() && records.size() < 2) {
    throw std::invalid_argument("evaluate: batch normalization needs at least 2 records");
  }
  const auto plan = eval_batches(records.size(), options.batch_size, net.uses_batch_statistics());
  std::vector<double> out(records.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t b = first; b < plan.size(); b += stride) {
      ad::Tape t(false);
      auto prob = model::predict(t, net, data::make_batch(records, plan[b]));
      const auto p = prob.data();
      for (std::size_t i = 0; i < plan[b].size(); ++i) out[plan[b][i]] = p[i];
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, options.threads));
  if (threads == 1 || plan.size() == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(threads, plan.size()); ++w) {
      pool.emplace_back(work, w, std::min(threads, plan.size()));
    }
  }
  return out;
}

EvalReport evaluate(const model::Network& net, const std::vector<data::Record>& records,
                    const EvalOptions& options) {
  const auto prob = predict_all(net, records, options);
  std::vector<double> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) labels[i] = records[i].label;
  return {auc(labels, prob), model::logloss(labels, prob), records.size()};
}

std::string report_text(const EvalReport& r) {
  return "{\"auc\": " + format_real(r.auc) + ", \"logloss\": " + format_real(r.logloss) +
         ", \"n\": " + std::to_string(r.n) + "}\n";
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << report_text(report);
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("auc").get<double>(), j.at("logloss").get<double>(),
            j.at("n").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed report: " + e.what());
  }
}

bool EarlyStopping::update(int epoch, double loss) {
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epoch;
    return true;
  }
  return false;
}

bool EarlyStopping::should_stop(int epoch) const {
  return patience_ > 0 && best_epoch_ > 0 && epoch - best_epoch_ >= patience_;
}

TrainResult train_derived(model::DerivedNet& net, const std::vector<data::Record>& train,
                          const std::vector<data::Record>& val, const TrainConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
  if (config.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
  if (train.empty() || val.empty()) throw std::invalid_argument("train: empty split");

  auto params = net.weights();
  optim::Adam opt(params, config.adam);
  auto rng = data::make_rng(config.seed, kShuffleStream);
  EarlyStopping stopper(config.patience);
  std::vector<std::vector<double>> best_weights;
  TrainResult result;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto shuffle_seed = rng();
    const auto plan = data::batches(train.size(), config.batch_size, shuffle_seed,
                                    static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto batch = data::make_batch(train, plan[b]);
      opt.zero_grad();
      ad::Tape t;
      auto loss = model::logloss(t, model::predict(t, net, batch), batch.labels);
      if (!std::isfinite(loss.item())) {
        throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + " (first record " +
                            std::to_string(batch.source_rows.front()) + ")");
      }
      t.backward(loss);
      opt.step();
      loss_sum += loss.item() * static_cast<double>(batch.size());
    }
    const auto report = evaluate(net, val, config.eval);
    if (stopper.update(epoch, report.logloss)) {
      result.best_val = report;
      result.best_epoch = epoch;
      best_weights.clear();
      for (const auto& p : params) best_weights.push_back(p.data_vec());
    }
    const double seconds =
        config.record_timing
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
            : 0.0;
    result.log.push_back({epoch, loss_sum / static_cast<double>(train.size()), report.logloss,
                          report.auc, seconds});
    if (stopper.should_stop(epoch)) break;
  }
  if (!best_weights.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].data_vec() = best_weights[i];
  }
  std::ostringstream state;
  state << rng;
  result.rng_state = state.str();
  return result;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "epoch,train_logloss,val_logloss,val_auc,seconds\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_real(r.train_logloss) << ',' << format_real(r.val_logloss)
        << ',' << format_real(r.val_auc) << ',' << format_real(r.seconds) << '\n';
  }
}

}  // namespace ctrnas::trainer
