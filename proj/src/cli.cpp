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

#include "ctrnas/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctrnas/config.hpp"
#include "ctrnas/genotype.hpp"
#include "ctrnas/model.hpp"
#include "ctrnas/search.hpp"
#include "ctrnas/trainer.hpp"

namespace ctrnas::cli {

namespace {

namespace fs = std::filesystem;
using trainer::format_real;

class MissingInput : public std::runtime_error {
 public:
  explicit MissingInput(const std::string& what) : std::runtime_error(what) {}
};

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> ops;
  bool no_anneal = false;
  std::optional<double> noisy_lambda;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> k;
  std::optional<std::size_t> nodes;
  std::optional<std::string> data;
  bool timing = false;
};

enum class Phase { kNone, kSearch, kTrain, kBoth };

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingInput(what + " not found: " + path.string());
}

config::RunConfig resolve(const Overrides& o, Phase phase,
                          std::optional<config::RunConfig> base = std::nullopt) {
  config::RunConfig c;
  if (o.config) {
    require_file(*o.config, "config file");
    c = config::load_config(*o.config);
  } else if (base) {
    c = *base;
  }
  if (o.out) c.out = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.ops) c.ops = config::parse_op_space(*o.ops);
  if (o.no_anneal) c.anneal = false;
  if (o.noisy_lambda) c.noisy_lambda = *o.noisy_lambda;
  if (o.k) c.k = *o.k;
  if (o.nodes) c.nodes = *o.nodes;
  if (o.data) c.data_path = *o.data;
  if (o.timing) c.timing = true;
  const bool search = phase == Phase::kSearch || phase == Phase::kBoth;
  const bool train = phase == Phase::kTrain || phase == Phase::kBoth;
  if (o.epochs) {
    if (search) c.search_epochs = *o.epochs;
    if (train) c.train_epochs = *o.epochs;
  }
  if (o.batch_size) {
    if (search) c.search_batch_size = *o.batch_size;
    if (train) c.train_batch_size = *o.batch_size;
  }
  c.validate();
  fs::create_directories(c.out);
  return c;
}

struct LoadedData {
  data::DatasetMeta meta;
  data::Splits splits;
};

LoadedData load_data(const config::RunConfig& c) {
  data::Dataset ds;
  if (c.data_path) {
    require_file(*c.data_path, "dataset file");
    ds = data::load_dataset(*c.data_path);
  } else {
    ds = data::synth_fm_dataset(c.synth_spec());
  }
  return {ds.meta, data::split(ds.records, c.split_spec())};
}

std::string report_line(const trainer::EvalReport& r) {
  return "auc=" + format_real(r.auc) + " logloss=" + format_real(r.logloss) +
         " n=" + std::to_string(r.n);
}

genotype::Genotype discretize_snapshot(const cells::ArchParams& arch, std::size_t k_retain) {
  return genotype::discretize(arch, search::interaction_spec(arch), search::ensemble_spec(arch),
                              k_retain);
}

struct Pipeline {
  genotype::Genotype genotype;
  trainer::EvalReport test;
  std::size_t params = 0;
};

// Search, discretize, retrain and test under one configuration.
Pipeline run_pipeline(const config::RunConfig& c, const LoadedData& d) {
  model::SuperNet net(d.meta, c.model_config(), c.seed);
  const auto found = search::run_search(net, d.splits.train, d.splits.val, c.search_config());
  Pipeline p;
  p.genotype = discretize_snapshot(found.best_arch, c.k_retain);
  auto derived = model::derive_network(p.genotype, d.meta, c.model_config(), c.seed);
  trainer::train_derived(*derived, d.splits.train, d.splits.val, c.train_config());
  p.test = trainer::evaluate(*derived, d.splits.test, c.eval_options());
  p.params = derived->parameter_count();
  return p;
}

int cmd_synth(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o, Phase::kNone);
  const auto ds = data::synth_fm_dataset(c.synth_spec());
  const auto path = fs::path(c.out) / "data.txt";
  data::save_dataset(ds, path);
  config::save_config(c, fs::path(c.out) / "config.json");
  std::size_t positives = 0;
  for (const auto& r : ds.records) positives += static_cast<std::size_t>(r.label);
  out << "wrote " << path.string() << " records=" << ds.records.size()
      << " positives=" << positives << "\n";
  return 0;
}

int cmd_search(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o, Phase::kSearch);
  const auto d = load_data(c);
  model::SuperNet net(d.meta, c.model_config(), c.seed);
  const auto result = search::run_search(net, d.splits.train, d.splits.val, c.search_config());
  const fs::path dir = c.out;
  search::save_arch(result.best_arch, dir / "arch.json");
  genotype::save_genotype(discretize_snapshot(result.best_arch, c.k_retain),
                          dir / "genotype.txt");
  std::ofstream log(dir / "search_log.csv");
  search::write_search_log(log, result.log);
  config::save_config(c, dir / "config.json");
  out << "best_epoch=" << result.best_epoch
      << " val_logloss=" << format_real(result.best_val_logloss)
      << " epochs=" << result.log.size() << "\n";
  return 0;
}

int cmd_derive(const Overrides& o, const std::optional<std::string>& arch_path,
               std::ostream& out) {
  const auto c = resolve(o, Phase::kNone);
  const fs::path path = arch_path ? fs::path(*arch_path) : fs::path(c.out) / "arch.json";
  require_file(path, "architecture snapshot");
  const auto g = discretize_snapshot(search::load_arch(path), c.k_retain);
  const auto dest = fs::path(c.out) / "genotype.txt";
  genotype::save_genotype(g, dest);
  config::save_config(c, fs::path(c.out) / "config.json");
  out << "wrote " << dest.string() << "\n";
  return 0;
}

int cmd_train(const Overrides& o, const std::optional<std::string>& genotype_path,
              std::ostream& out) {
  const auto c = resolve(o, Phase::kTrain);
  const fs::path gpath =
      genotype_path ? fs::path(*genotype_path) : fs::path(c.out) / "genotype.txt";
  require_file(gpath, "genotype file");
  const auto g = genotype::load_genotype(gpath);
  const auto d = load_data(c);
  auto net = model::derive_network(g, d.meta, c.model_config(), c.seed);
  const auto result = trainer::train_derived(*net, d.splits.train, d.splits.val, c.train_config());
  const fs::path dir = c.out;
  model::save_checkpoint(model::make_checkpoint(*net, config::to_json(c), result.rng_state),
                         dir / "checkpoint.json");
  std::ofstream log(dir / "train_log.csv");
  trainer::write_train_log(log, result.log);
  const auto test = trainer::evaluate(*net, d.splits.test, c.eval_options());
  trainer::save_report(test, dir / "test_report.json");
  config::save_config(c, dir / "config.json");
  out << "best_epoch=" << result.best_epoch << " params=" << net->parameter_count() << "\n";
  out << "test " << report_line(test) << "\n";
  return 0;
}

int cmd_eval(const Overrides& o, const std::optional<std::string>& ckpt_path,
             const std::string& split, std::ostream& out) {
  // The checkpoint's own configuration locates the data unless --config is given.
  const fs::path default_out = o.out ? fs::path(*o.out) : fs::path("out");
  const fs::path path = ckpt_path ? fs::path(*ckpt_path) : default_out / "checkpoint.json";
  require_file(path, "checkpoint");
  const auto ckpt = model::load_checkpoint(path);
  std::optional<config::RunConfig> base;
  if (!o.config) base = config::from_json(ckpt.config);
  const auto c = resolve(o, Phase::kNone, base);
  const auto d = load_data(c);
  if (d.meta.field_cardinalities != ckpt.field_cardinalities) {
    throw std::runtime_error("dataset fields do not match the checkpoint");
  }
  const auto net = model::restore_network(ckpt);
  const std::vector<data::Record>* records = nullptr;
  if (split == "train") records = &d.splits.train;
  if (split == "val") records = &d.splits.val;
  if (split == "test") records = &d.splits.test;
  if (records == nullptr) throw std::invalid_argument("unknown split '" + split + "'");
  const auto report = trainer::evaluate(*net, *records, c.eval_options());
  trainer::save_report(report, fs::path(c.out) / "eval_report.json");
  config::save_config(c, fs::path(c.out) / "config.json");
  out << report_line(report) << "\n";
  return 0;
}

struct AblationRow {
  std::string name;
  config::RunConfig config;
};

std::vector<AblationRow> ablation_rows(const config::RunConfig& base) {
  std::vector<AblationRow> rows;
  for (const auto& grid : base.ablate_grids) {
    if (grid == "techniques") {
      for (const auto& [name, noisy, anneal] :
           std::vector<std::tuple<std::string, bool, bool>>{{"origin", false, false},
                                                            {"noisy", true, false},
                                                            {"anneal", false, true},
                                                            {"noisy+anneal", true, true}}) {
        auto c = base;
        c.anneal = anneal;
        c.noisy_lambda = noisy ? base.ablate_noisy_lambda : 0.0;
        rows.push_back({name, c});
      }
    } else if (grid == "ops") {
      using ops::OperatorKind;
      const std::vector<std::pair<std::string, std::vector<OperatorKind>>> omissions{
          {"omit-slp", {OperatorKind::kSlp}},
          {"omit-fm", {OperatorKind::kFm}},
          {"omit-slp+fm", {OperatorKind::kSlp, OperatorKind::kFm}},
          {"omit-none", {}}};
      for (const auto& [name, omitted] : omissions) {
        auto c = base;
        c.ops.clear();
        for (auto kind : ops::kAllOperators) {
          if (std::find(omitted.begin(), omitted.end(), kind) == omitted.end()) {
            c.ops.push_back(kind);
          }
        }
        rows.push_back({name, c});
      }
    }
  }
  return rows;
}

int cmd_ablate(const Overrides& o, const std::optional<std::string>& grids, std::ostream& out,
               std::ostream& err) {
  auto c = resolve(o, Phase::kBoth);
  if (grids) {
    c.ablate_grids.clear();
    std::stringstream ss(*grids);
    std::string g;
    while (std::getline(ss, g, ',')) {
      if (!g.empty()) c.ablate_grids.push_back(g);
    }
    c.validate();
  }
  const auto rows = ablation_rows(c);
  if (rows.empty()) throw std::invalid_argument("ablation grid is empty");
  const auto d = load_data(c);
  const fs::path dir = c.out;
  std::ofstream csv(dir / "ablate.csv");
  std::ofstream status(dir / "ablate_status.csv");
  csv << "config,auc,logloss,params,seconds\n";
  status << "config,status,message\n";
  int failures = 0;
  for (const auto& row : rows) {
    const auto start = std::chrono::steady_clock::now();
    std::string state = "ok", message;
    Pipeline p;
    try {
      p = run_pipeline(row.config, d);
    } catch (const std::exception& e) {
      state = "failed";
      message = e.what();
      ++failures;
      err << "ablate " << row.name << ": " << message << "\n";
    }
    const double seconds =
        c.timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                 : 0.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const bool ok = state == "ok";
    csv << row.name << ',' << format_real(ok ? p.test.auc : nan) << ','
        << format_real(ok ? p.test.logloss : nan) << ',' << (ok ? p.params : 0) << ','
        << format_real(seconds) << '\n';
    for (auto& ch : message) {
      if (ch == ',' || ch == '\n') ch = ' ';
    }
    status << row.name << ',' << state << ',' << message << '\n';
    out << row.name << ": " << (ok ? report_line(p.test) : "failed") << "\n";
  }
  config::save_config(c, dir / "config.json");
  return failures == 0 ? 0 : kExitFailure;
}

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--seed", o.seed, "Seed for data, initialization and shuffling");
  app.add_option("--threads", o.threads, "Evaluation threads");
  app.add_option("--ops", o.ops, "Comma-separated operation space (must include skip)");
  app.add_flag("--no-anneal", o.no_anneal, "Keep the softmax temperature at 1");
  app.add_option("--noisy-lambda", o.noisy_lambda, "Noise scale of the skip operator");
  app.add_option("--epochs", o.epochs, "Epochs of the command's training phase");
  app.add_option("--batch-size", o.batch_size, "Batch size of the command's training phase");
  app.add_option("--k", o.k, "Embedding size");
  app.add_option("--nodes", o.nodes, "Intermediate nodes per cell");
  app.add_option("--data", o.data, "Dataset file (default: synthetic)");
  app.add_flag("--timing", o.timing, "Record wall-clock seconds in logs");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable architecture search for CTR prediction", "ctrnas"};
  app.require_subcommand(1);
  Overrides o;
  add_common(app, o);
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  auto* search = app.add_subcommand("search", "Search an architecture");
  auto* derive = app.add_subcommand("derive", "Discretize an architecture snapshot");
  std::optional<std::string> arch_path;
  derive->add_option("--arch", arch_path, "Architecture snapshot (default <out>/arch.json)");
  auto* train = app.add_subcommand("train", "Retrain a genotype from scratch");
  std::optional<std::string> genotype_path;
  train->add_option("--genotype", genotype_path, "Genotype file (default <out>/genotype.txt)");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::optional<std::string> ckpt_path;
  std::string split = "test";
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint (default <out>/checkpoint.json)");
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grids");
  std::optional<std::string> grids;
  ablate->add_option("--grids", grids, "Comma-separated grids: techniques, ops");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitMissingInput;
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*search) return cmd_search(o, out);
    if (*derive) return cmd_derive(o, arch_path, out);
    if (*train) return cmd_train(o, genotype_path, out);
    if (*eval) return cmd_eval(o, ckpt_path, split, out);
    if (*ablate) return cmd_ablate(o, grids, out, err);
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ctrnas::cli
