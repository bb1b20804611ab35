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

#include "ctrnas/search.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include "json.hpp"

namespace ctrnas::search {

namespace {

using nlohmann::json;

constexpr std::uint64_t kNoiseStream = 0x9015e;
constexpr std::uint64_t kWeightsShuffle = 0x5eed0001;
constexpr std::uint64_t kArchShuffle = 0x5eed0002;

constexpr const char* kArchFormat = "ctrnas-arch";
constexpr int kArchVersion = 1;

void set_trainable(std::vector<ad::Value>& values, bool flag) {
  for (auto& v : values) v.set_requires_grad(flag);
}

// BN needs at least two samples, so a trailing singleton batch is dropped.
std::vector<std::vector<std::size_t>> step_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed, int epoch) {
  auto out = data::batches(n, batch_size, seed, static_cast<std::uint64_t>(epoch));
  if (!out.empty() && out.back().size() < 2) out.pop_back();
  return out;
}

json cell_arch_json(const cells::CellArch& c) {
  json alpha = json::array(), beta = json::array();
  for (const auto& a : c.alpha) alpha.push_back(a.data_vec());
  for (const auto& b : c.beta) beta.push_back(b.data_vec());
  return {{"intermediate", c.beta.size()}, {"alpha", std::move(alpha)}, {"beta", std::move(beta)}};
}

cells::CellArch cell_arch_from_json(const json& j, const cells::CellSpec& base, std::size_t ops) {
  const auto spec = cells::CellSpec{base.kind, base.num_inputs, j.at("intermediate").get<std::size_t>()};
  auto arch = cells::init_cell_arch(spec, ops);
  const auto& alpha = j.at("alpha");
  const auto& beta = j.at("beta");
  if (alpha.size() != arch.alpha.size() || beta.size() != arch.beta.size()) {
    throw std::invalid_argument(std::string(cells::cell_name(spec.kind)) +
                                ": alpha/beta counts do not match the node count");
  }
  for (std::size_t e = 0; e < alpha.size(); ++e) {
    const auto v = alpha[e].get<std::vector<double>>();
    if (v.size() != ops) throw std::invalid_argument("alpha length differs from operation space");
    arch.alpha[e].data_vec() = v;
  }
  for (std::size_t n = 0; n < beta.size(); ++n) {
    const auto v = beta[n].get<std::vector<double>>();
    if (v.size() != arch.beta[n].size()) {
      throw std::invalid_argument("beta length differs from predecessor count");
    }
    arch.beta[n].data_vec() = v;
  }
  return arch;
}

}  // namespace

double anneal_tau(int total_epochs, int epoch) {
  if (epoch < 1 || epoch > total_epochs) {
    throw std::out_of_range("anneal_tau: epoch " + std::to_string(epoch) + " outside [1, " +
                            std::to_string(total_epochs) + "]");
  }
  return (1.0 + std::log(static_cast<double>(total_epochs))) /
         (1.0 + std::log(static_cast<double>(epoch)));
}

int SearchConfig::effective_patience() const {
  if (patience) return *patience;
  return epochs <= 5 ? 0 : 5;
}

void SearchConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("search: epochs must be at least 1");
  if (batch_size < 2) throw std::invalid_argument("search: batch size must be at least 2");
  if (w_lr < 0.0 || arch.lr < 0.0) {
    throw std::invalid_argument("search: learning rates must be non-negative");
  }
  if (noisy_lambda < 0.0) throw std::invalid_argument("search: noisy lambda must be >= 0");
  if (patience && *patience < 0) throw std::invalid_argument("search: patience must be >= 0");
}

BilevelOptimizer::BilevelOptimizer(model::SuperNet& net, const SearchConfig& config)
    : net_(net),
      config_(config),
      weights_(net.weights()),
      arch_(net.arch().values()),
      w_opt_(weights_, config.w_lr, config.w_momentum, config.w_weight_decay),
      a_opt_(arch_, config.arch),
      noise_rng_(data::make_rng(config.seed, kNoiseStream)) {
  config_.validate();
}

double BilevelOptimizer::arch_step(const data::Batch& batch, int epoch, std::size_t index) {
  set_trainable(weights_, false);
  set_trainable(arch_, true);
  a_opt_.zero_grad();
  ad::Tape t;
  cells::ForwardOptions opts;
  opts.training = true;
  opts.noisy_lambda = config_.noisy_lambda;
  opts.rng = &noise_rng_;
  auto loss = model::logloss(t, model::predict(t, net_, batch, opts), batch.labels);
  if (!std::isfinite(loss.item())) {
    throw trainer::NonFiniteLoss("search: non-finite loss in architecture step, epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(index));
  }
  t.backward(loss);
  a_opt_.step();
  return loss.item();
}

double BilevelOptimizer::weight_step(const data::Batch& batch, int epoch, std::size_t index) {
  set_trainable(arch_, false);
  set_trainable(weights_, true);
  w_opt_.zero_grad();
  ad::Tape t;
  cells::ForwardOptions opts;
  opts.training = true;
  opts.noisy_lambda = config_.noisy_lambda;
  opts.rng = &noise_rng_;
  auto loss = model::logloss(t, model::predict(t, net_, batch, opts), batch.labels);
  if (!std::isfinite(loss.item())) {
    throw trainer::NonFiniteLoss("search: non-finite loss in weight step, epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(index));
  }
  t.backward(loss);
  w_opt_.step();
  return loss.item();
}

EpochStats BilevelOptimizer::run_epoch(const std::vector<data::Record>& weights_half,
                                       const std::vector<data::Record>& arch_half,
                                       SearchState& state) {
  if (weights_half.size() < 2 || arch_half.size() < 2) {
    throw std::invalid_argument("search: each data half needs at least 2 records");
  }
  state.epoch += 1;
  const int epoch = state.epoch;
  if (epoch > config_.epochs) {
    throw std::out_of_range("search: epoch " + std::to_string(epoch) + " exceeds configured " +
                            std::to_string(config_.epochs));
  }
  state.tau = config_.anneal ? anneal_tau(config_.epochs, epoch) : 1.0;
  net_.arch().tau = state.tau;
  w_opt_.set_lr(optim::cosine_lr(config_.w_lr, config_.w_lr_min, epoch - 1, config_.epochs));

  const auto wplan =
      step_batches(weights_half.size(), config_.batch_size, config_.seed ^ kWeightsShuffle, epoch);
  const auto aplan =
      step_batches(arch_half.size(), config_.batch_size, config_.seed ^ kArchShuffle, epoch);
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t loss_records = 0;
  for (std::size_t i = 0; i < std::max(wplan.size(), aplan.size()); ++i) {
    if (i < aplan.size()) {
      arch_step(data::make_batch(arch_half, aplan[i]), epoch, i);
      ++stats.arch_steps;
    }
    if (i < wplan.size()) {
      const auto batch = data::make_batch(weights_half, wplan[i]);
      loss_sum += weight_step(batch, epoch, i) * static_cast<double>(batch.size());
      loss_records += batch.size();
      ++stats.weight_steps;
    }
  }
  // Both partitions stay trainable between epochs.
  set_trainable(weights_, true);
  set_trainable(arch_, true);
  stats.train_logloss = loss_records ? loss_sum / static_cast<double>(loss_records) : 0.0;
  return stats;
}

SearchResult run_search(model::SuperNet& net, const std::vector<data::Record>& train,
                        const std::vector<data::Record>& val, const SearchConfig& config) {
  config.validate();
  const auto [weights_half, arch_half] = data::halve(train, config.seed);
  BilevelOptimizer opt(net, config);
  SearchState state;
  trainer::EarlyStopping stopper(config.effective_patience());
  SearchResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto stats = opt.run_epoch(weights_half, arch_half, state);
    const auto report = trainer::evaluate(net, val, config.eval);
    if (stopper.update(state.epoch, report.logloss)) {
      state.best_val_logloss = report.logloss;
      state.best_epoch = state.epoch;
      state.best_arch = cells::clone_arch(net.arch());
    }
    const double seconds =
        config.record_timing
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
            : 0.0;
    result.log.push_back(
        {state.epoch, state.tau, stats.train_logloss, report.logloss, report.auc, seconds});
    if (stopper.should_stop(state.epoch)) break;
  }
  if (state.best_epoch == 0) state.best_arch = cells::clone_arch(net.arch());
  result.best_arch = std::move(state.best_arch);
  result.best_epoch = state.best_epoch;
  result.best_val_logloss = state.best_val_logloss;
  return result;
}

void write_search_log(std::ostream& out, const std::vector<SearchLogRow>& log) {
  using trainer::format_real;
  out << "epoch,tau,train_logloss,val_logloss,val_auc,seconds\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_real(r.tau) << ',' << format_real(r.train_logloss) << ','
        << format_real(r.val_logloss) << ',' << format_real(r.val_auc) << ','
        << format_real(r.seconds) << '\n';
  }
}

cells::CellSpec interaction_spec(const cells::ArchParams& arch) {
  return cells::CellSpec::interaction(arch.interaction.beta.size());
}

cells::CellSpec ensemble_spec(const cells::ArchParams& arch) {
  return cells::CellSpec::ensemble(arch.ensemble.beta.size());
}

void save_arch(const cells::ArchParams& arch, const std::filesystem::path& path) {
  json ops = json::array();
  for (auto k : arch.ops) ops.push_back(std::string(ops::operator_name(k)));
  json j = {{"format", kArchFormat},
            {"version", kArchVersion},
            {"ops", std::move(ops)},
            {"tau", arch.tau},
            {"interaction", cell_arch_json(arch.interaction)},
            {"ensemble", cell_arch_json(arch.ensemble)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write architecture snapshot " + path.string());
  out << j.dump(2) << "\n";
}

cells::ArchParams load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open architecture snapshot " + path.string());
  try {
    const auto j = json::parse(in);
    if (j.value("format", "") != kArchFormat || j.value("version", 0) != kArchVersion) {
      throw std::invalid_argument("not an architecture snapshot");
    }
    cells::ArchParams arch;
    for (const auto& name : j.at("ops")) {
      const auto kind = ops::parse_operator(name.get<std::string>());
      if (!kind) throw std::invalid_argument("unknown operator '" + name.get<std::string>() + "'");
      arch.ops.push_back(*kind);
    }
    if (arch.ops.empty()) throw std::invalid_argument("operation space is empty");
    arch.tau = j.at("tau").get<double>();
    arch.interaction = cell_arch_from_json(j.at("interaction"), cells::CellSpec::interaction(1),
                                           arch.ops.size());
    arch.ensemble =
        cell_arch_from_json(j.at("ensemble"), cells::CellSpec::ensemble(1), arch.ops.size());
    cells::check_arch(arch, interaction_spec(arch), ensemble_spec(arch));
    return arch;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed architecture snapshot: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace ctrnas::search
