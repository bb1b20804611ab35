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

#include "ctrnas/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace ctrnas::config {

namespace {

using nlohmann::json;

// Reads keys of one JSON object, rejecting any key it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  // Call after all reads; throws on the first key that was never read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(where(key) + ": unknown key");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = get<T>(j_.at(key));
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    read(key, v);
    out = v;
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <typename T>
  static T get(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw json::type_error::create(302, "bool", &v);
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw json::type_error::create(302, "unsigned", &v);
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw json::type_error::create(302, "integer", &v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw json::type_error::create(302, "number", &v);
    }
    return v.get<T>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

std::vector<ops::OperatorKind> parse_op_space(const std::string& list) {
  std::vector<ops::OperatorKind> out;
  try {
    out = ops::parse_operator_list(list);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (std::find(out.begin(), out.end(), ops::OperatorKind::kSkip) == out.end()) {
    throw ConfigError("operation space '" + list + "' must contain skip");
  }
  return out;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(threads >= 1, "threads must be at least 1");
  require(!out.empty(), "out must name a directory");
  double total = 0.0;
  for (double r : split) {
    require(r > 0.0, "split ratios must be positive");
    total += r;
  }
  require(std::abs(total - 1.0) < 1e-9, "split ratios must sum to 1");
  require(synth.fields >= 2, "data.synth.fields must be at least 2");
  require(synth.cardinality >= 1, "data.synth.cardinality must be at least 1");
  require(synth.records >= 3, "data.synth.records must be at least 3");
  require(synth.latent_dim >= 1, "data.synth.latent_dim must be at least 1");
  require(synth.noise >= 0.0, "data.synth.noise must be non-negative");
  require(k >= 1, "model.k must be at least 1");
  require(nodes >= 1 && nodes <= cells::kMaxNodes, "model.nodes must be in [1, 4]");
  require(!ops.empty(), "model.ops must not be empty");
  require(std::find(ops.begin(), ops.end(), ops::OperatorKind::kSkip) != ops.end(),
          "model.ops must contain skip");
  require(k_retain >= 1, "model.k_retain must be at least 1");
  require(search_epochs >= 1, "search.epochs must be at least 1");
  require(search_batch_size >= 2, "search.batch_size must be at least 2");
  require(w_lr >= 0.0 && arch_lr >= 0.0, "search learning rates must be non-negative");
  require(noisy_lambda >= 0.0, "search.noisy_lambda must be non-negative");
  require(!search_patience || *search_patience >= 0, "search.patience must be non-negative");
  require(train_epochs >= 1, "train.epochs must be at least 1");
  require(train_batch_size >= 1, "train.batch_size must be at least 1");
  require(train_lr >= 0.0, "train.lr must be non-negative");
  require(train_patience >= 0, "train.patience must be non-negative");
  require(eval_batch_size >= 1, "eval.batch_size must be at least 1");
  for (const auto& g : ablate_grids) {
    require(g == "techniques" || g == "ops", "ablate.grids: unknown grid '" + g + "'");
  }
  require(ablate_noisy_lambda >= 0.0, "ablate.noisy_lambda must be non-negative");
}

data::SynthSpec RunConfig::synth_spec() const {
  data::SynthSpec s;
  s.fields = synth.fields;
  s.cardinality = synth.cardinality;
  s.records = synth.records;
  s.latent_dim = synth.latent_dim;
  s.noise = synth.noise;
  s.linear_scale = synth.linear_scale;
  s.seed = seed;
  return s;
}

data::SplitSpec RunConfig::split_spec() const { return {split, seed}; }

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig m;
  m.k = k;
  m.interaction_nodes = nodes;
  m.ensemble_nodes = nodes;
  m.ops = ops;
  m.node_norm = node_norm;
  return m;
}

search::SearchConfig RunConfig::search_config() const {
  search::SearchConfig s;
  s.epochs = search_epochs;
  s.batch_size = search_batch_size;
  s.w_lr = w_lr;
  s.w_lr_min = w_lr_min;
  s.w_momentum = w_momentum;
  s.w_weight_decay = w_weight_decay;
  s.arch = {arch_lr, arch_beta1, arch_beta2, arch_eps, arch_weight_decay};
  s.anneal = anneal;
  s.noisy_lambda = noisy_lambda;
  s.seed = seed;
  s.patience = search_patience;
  s.eval = eval_options();
  s.record_timing = timing;
  return s;
}

trainer::TrainConfig RunConfig::train_config() const {
  trainer::TrainConfig t;
  t.epochs = train_epochs;
  t.batch_size = train_batch_size;
  t.adam = {train_lr, train_beta1, train_beta2, train_eps, train_weight_decay};
  t.patience = train_patience;
  t.seed = seed;
  t.eval = eval_options();
  t.record_timing = timing;
  return t;
}

trainer::EvalOptions RunConfig::eval_options() const { return {eval_batch_size, threads}; }

json to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"threads", c.threads},
      {"out", c.out},
      {"timing", c.timing},
      {"data",
       {{"path", c.data_path ? json(*c.data_path) : json(nullptr)},
        {"split", c.split},
        {"synth",
         {{"fields", c.synth.fields},
          {"cardinality", c.synth.cardinality},
          {"records", c.synth.records},
          {"latent_dim", c.synth.latent_dim},
          {"noise", c.synth.noise},
          {"linear_scale", c.synth.linear_scale}}}}},
      {"model",
       {{"k", c.k},
        {"nodes", c.nodes},
        {"ops", ops::format_operator_list(c.ops)},
        {"node_norm", model::node_norm_name(c.node_norm)},
        {"k_retain", c.k_retain}}},
      {"search",
       {{"epochs", c.search_epochs},
        {"batch_size", c.search_batch_size},
        {"w_lr", c.w_lr},
        {"w_lr_min", c.w_lr_min},
        {"w_momentum", c.w_momentum},
        {"w_weight_decay", c.w_weight_decay},
        {"arch_lr", c.arch_lr},
        {"arch_beta1", c.arch_beta1},
        {"arch_beta2", c.arch_beta2},
        {"arch_eps", c.arch_eps},
        {"arch_weight_decay", c.arch_weight_decay},
        {"anneal", c.anneal},
        {"noisy_lambda", c.noisy_lambda},
        {"patience", c.search_patience ? json(*c.search_patience) : json(nullptr)}}},
      {"train",
       {{"epochs", c.train_epochs},
        {"batch_size", c.train_batch_size},
        {"lr", c.train_lr},
        {"beta1", c.train_beta1},
        {"beta2", c.train_beta2},
        {"eps", c.train_eps},
        {"weight_decay", c.train_weight_decay},
        {"patience", c.train_patience}}},
      {"eval", {{"batch_size", c.eval_batch_size}}},
      {"ablate", {{"grids", c.ablate_grids}, {"noisy_lambda", c.ablate_noisy_lambda}}},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  {
    Section root(j, "");
    root.read("seed", c.seed);
    root.read("threads", c.threads);
    root.read("out", c.out);
    root.read("timing", c.timing);
    if (auto d = root.child("data")) {
      d->read_optional("path", c.data_path);
      std::vector<double> split(c.split.begin(), c.split.end());
      d->read("split", split);
      if (split.size() != 3) throw ConfigError("data.split: expected three ratios");
      std::copy(split.begin(), split.end(), c.split.begin());
      if (auto s = d->child("synth")) {
        s->read("fields", c.synth.fields);
        s->read("cardinality", c.synth.cardinality);
        s->read("records", c.synth.records);
        s->read("latent_dim", c.synth.latent_dim);
        s->read("noise", c.synth.noise);
        s->read("linear_scale", c.synth.linear_scale);
        s->finish();
      }
      d->finish();
    }
    if (auto m = root.child("model")) {
      m->read("k", c.k);
      m->read("nodes", c.nodes);
      std::string ops_list = ops::format_operator_list(c.ops);
      m->read("ops", ops_list);
      c.ops = parse_op_space(ops_list);
      std::string norm = model::node_norm_name(c.node_norm);
      m->read("node_norm", norm);
      try {
        c.node_norm = model::parse_node_norm(norm);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model.node_norm: ") + e.what());
      }
      m->read("k_retain", c.k_retain);
      m->finish();
    }
    if (auto s = root.child("search")) {
      s->read("epochs", c.search_epochs);
      s->read("batch_size", c.search_batch_size);
      s->read("w_lr", c.w_lr);
      s->read("w_lr_min", c.w_lr_min);
      s->read("w_momentum", c.w_momentum);
      s->read("w_weight_decay", c.w_weight_decay);
      s->read("arch_lr", c.arch_lr);
      s->read("arch_beta1", c.arch_beta1);
      s->read("arch_beta2", c.arch_beta2);
      s->read("arch_eps", c.arch_eps);
      s->read("arch_weight_decay", c.arch_weight_decay);
      s->read("anneal", c.anneal);
      s->read("noisy_lambda", c.noisy_lambda);
      s->read_optional("patience", c.search_patience);
      s->finish();
    }
    if (auto t = root.child("train")) {
      t->read("epochs", c.train_epochs);
      t->read("batch_size", c.train_batch_size);
      t->read("lr", c.train_lr);
      t->read("beta1", c.train_beta1);
      t->read("beta2", c.train_beta2);
      t->read("eps", c.train_eps);
      t->read("weight_decay", c.train_weight_decay);
      t->read("patience", c.train_patience);
      t->finish();
    }
    if (auto e = root.child("eval")) {
      e->read("batch_size", c.eval_batch_size);
      e->finish();
    }
    if (auto a = root.child("ablate")) {
      a->read("grids", c.ablate_grids);
      a->read("noisy_lambda", c.ablate_noisy_lambda);
      a->finish();
    }
    root.finish();
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_json(c).dump(2) << "\n";
}

}  // namespace ctrnas::config
