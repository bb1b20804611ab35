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

#include "ctrnas/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace ctrnas::model {

namespace {

using nlohmann::json;

constexpr std::uint64_t kInteractionStream = 0xce11;
constexpr std::uint64_t kEnsembleStream = 0xce12;
constexpr std::uint64_t kHeadStream = 0x4ead;

constexpr const char* kCheckpointFormat = "ctrnas-checkpoint";
constexpr int kCheckpointVersion = 1;

void init_head(std::size_t in, std::uint64_t seed, ad::Value& w, ad::Value& b) {
  auto rng = data::make_rng(seed, kHeadStream);
  std::normal_distribution<double> dist(0.0, ops::kWeightInitStddev);
  std::vector<double> wd(in);
  for (auto& v : wd) v = dist(rng);
  w = ad::Value::leaf({in, 1}, std::move(wd), true);
  b = ad::Value::zeros({1}, true);
}

ad::Value apply_head(ad::Tape& t, const ad::Value& features, const ad::Value& w,
                     const ad::Value& b) {
  if (features.dim(1) != w.dim(0)) {
    throw ad::ShapeError(ad::Primitive::kMatmul, features.shape(), w.shape());
  }
  auto z = ad::add(t, ad::matmul(t, features, w), b);
  return ad::reshape(t, z, {features.dim(0)});
}

std::string edge_prefix(const cells::CellSpec& spec, std::size_t to, std::size_t from) {
  return std::string(cells::cell_name(spec.kind)) + ".edge." + std::to_string(to) + "." +
         std::to_string(from) + ".";
}

void push_operator(std::vector<NamedParam>& out, const std::string& prefix,
                   const ops::OperatorParams& op) {
  for (const auto& [name, v] : op.trainables) {
    out.push_back({prefix + std::string(ops::operator_name(op.kind)) + "." + name, v});
  }
}

void check_batch(const data::Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
}

}  // namespace

std::vector<ad::Value> Network::weights() const {
  std::vector<ad::Value> out;
  for (auto& p : named_weights()) out.push_back(p.value);
  return out;
}

std::size_t Network::parameter_count(bool include_embeddings) const {
  std::size_t n = 0;
  for (const auto& p : named_weights()) {
    if (!include_embeddings && p.name.starts_with("embedding.")) continue;
    n += p.value.size();
  }
  return n;
}

ad::Value predict(ad::Tape& t, const Network& net, const data::Batch& batch,
                  const cells::ForwardOptions& options) {
  return ad::sigmoid(t, net.logits(t, batch, options));
}

ad::Value logloss(ad::Tape& t, const ad::Value& prob, std::span<const double> labels) {
  return ad::binary_cross_entropy(t, prob, labels, kProbClip);
}

double logloss(std::span<const double> labels, std::span<const double> prob) {
  if (labels.size() != prob.size()) {
    throw std::invalid_argument("logloss: " + std::to_string(labels.size()) + " labels vs " +
                                std::to_string(prob.size()) + " predictions");
  }
  if (labels.empty()) throw std::invalid_argument("logloss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(prob[i], kProbClip, 1.0 - kProbClip);
    total -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

SuperNet::SuperNet(const data::DatasetMeta& meta, const ModelConfig& config, std::uint64_t seed)
    : Network(meta), config_(config) {
  if (config.ops.empty()) throw std::invalid_argument("operation space is empty");
  const auto ispec = cells::CellSpec::interaction(config.interaction_nodes);
  const auto espec = cells::CellSpec::ensemble(config.ensemble_nodes);
  dual_ = embedding::init_embedding(meta, config.k, seed);
  auto irng = data::make_rng(seed, kInteractionStream);
  interaction_ = cells::init_cell_params(ispec, config.ops, meta.m, config.k, irng);
  auto erng = data::make_rng(seed, kEnsembleStream);
  ensemble_ = cells::init_cell_params(espec, config.ops, meta.m, config.k, erng);
  init_head(espec.nodes * meta.m * config.k, seed, head_w_, head_b_);
  arch_ = cells::init_arch(ispec, espec, config.ops);
}

ad::Value SuperNet::logits(ad::Tape& t, const data::Batch& batch,
                           const cells::ForwardOptions& options) const {
  check_batch(batch);
  auto opts = options;
  opts.node_norm = config_.node_norm;
  auto e_high = embedding::embed(t, dual_.high, meta(), batch);
  auto h = cells::interaction_cell_forward(t, e_high, arch_.interaction, arch_.tau, interaction_,
                                           opts);
  auto e_low = embedding::embed(t, dual_.low, meta(), batch);
  auto towers =
      cells::ensemble_cell_forward(t, h, e_low, arch_.ensemble, arch_.tau, ensemble_, opts);
  return apply_head(t, towers, head_w_, head_b_);
}

std::vector<NamedParam> SuperNet::named_weights() const {
  std::vector<NamedParam> out{{"embedding.low", dual_.low.weights},
                              {"embedding.high", dual_.high.weights}};
  for (const auto* cell : {&interaction_, &ensemble_}) {
    const auto& spec = cell->spec;
    for (std::size_t j = spec.num_inputs; j < spec.node_count(); ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        for (const auto& op : cell->edges[spec.edge_index(j, i)].per_op) {
          push_operator(out, edge_prefix(spec, j, i), op);
        }
      }
    }
    if (cell->fusion.defined()) {
      out.push_back({std::string(cells::cell_name(spec.kind)) + ".fusion", cell->fusion});
    }
  }
  out.push_back({"head.w", head_w_});
  out.push_back({"head.b", head_b_});
  return out;
}

namespace {

DerivedCell build_cell(const genotype::CellGenotype& g, std::size_t m, std::size_t k,
                       std::mt19937_64& rng) {
  DerivedCell cell;
  cell.spec = g.spec;
  for (const auto& node : g.nodes) {
    std::vector<DerivedEdge> edges;
    for (const auto& e : node) edges.push_back({e.from, ops::init_operator(e.op, m, k, rng)});
    cell.nodes.push_back(std::move(edges));
  }
  if (g.spec.kind == cells::CellKind::kInteraction) {
    std::normal_distribution<double> dist(0.0, ops::kWeightInitStddev);
    std::vector<double> c(m * g.spec.nodes * m);
    for (auto& v : c) v = dist(rng);
    cell.fusion = ad::Value::leaf({m, g.spec.nodes * m}, std::move(c), true);
  }
  return cell;
}

std::vector<ad::Value> run_derived_cell(ad::Tape& t, std::vector<ad::Value> values,
                                        const DerivedCell& cell, cells::NodeNorm norm) {
  for (const auto& node : cell.nodes) {
    ad::Value acc;
    for (const auto& e : node) {
      auto y = ops::apply(t, values.at(e.from), e.op);
      acc = acc.defined() ? ad::add(t, acc, y) : y;
    }
    values.push_back(cells::normalize_node(t, acc, norm));
  }
  return {values.begin() + static_cast<std::ptrdiff_t>(cell.spec.num_inputs), values.end()};
}

}  // namespace

DerivedNet::DerivedNet(const genotype::Genotype& g, const data::DatasetMeta& meta, std::size_t k,
                       cells::NodeNorm node_norm, std::uint64_t seed)
    : Network(meta), genotype_(g), k_(k), node_norm_(node_norm) {
  genotype::validate(g);
  dual_ = embedding::init_embedding(meta, k, seed);
  auto irng = data::make_rng(seed, kInteractionStream);
  interaction_ = build_cell(g.interaction, meta.m, k, irng);
  auto erng = data::make_rng(seed, kEnsembleStream);
  ensemble_ = build_cell(g.ensemble, meta.m, k, erng);
  init_head(g.ensemble.spec.nodes * meta.m * k, seed, head_w_, head_b_);
}

ad::Value DerivedNet::logits(ad::Tape& t, const data::Batch& batch,
                             const cells::ForwardOptions&) const {
  check_batch(batch);
  auto e_high = embedding::embed(t, dual_.high, meta(), batch);
  const auto inodes = run_derived_cell(t, {e_high}, interaction_, node_norm_);
  auto h = cells::fuse_nodes(t, inodes, interaction_.fusion);
  auto e_low = embedding::embed(t, dual_.low, meta(), batch);
  const auto enodes = run_derived_cell(t, {h, e_low}, ensemble_, node_norm_);
  return apply_head(t, cells::concat_towers(t, enodes), head_w_, head_b_);
}

std::vector<NamedParam> DerivedNet::named_weights() const {
  std::vector<NamedParam> out{{"embedding.low", dual_.low.weights},
                              {"embedding.high", dual_.high.weights}};
  for (const auto* cell : {&interaction_, &ensemble_}) {
    for (std::size_t n = 0; n < cell->nodes.size(); ++n) {
      for (const auto& e : cell->nodes[n]) {
        push_operator(out, edge_prefix(cell->spec, cell->spec.num_inputs + n, e.from), e.op);
      }
    }
    if (cell->fusion.defined()) {
      out.push_back({std::string(cells::cell_name(cell->spec.kind)) + ".fusion", cell->fusion});
    }
  }
  out.push_back({"head.w", head_w_});
  out.push_back({"head.b", head_b_});
  return out;
}

std::unique_ptr<DerivedNet> derive_network(const genotype::Genotype& g,
                                           const data::DatasetMeta& meta,
                                           const ModelConfig& config, std::uint64_t seed) {
  return std::make_unique<DerivedNet>(g, meta, config.k, config.node_norm, seed);
}

std::string node_norm_name(cells::NodeNorm norm) {
  return norm == cells::NodeNorm::kRms ? "rms" : "none";
}

cells::NodeNorm parse_node_norm(const std::string& name) {
  if (name == "rms") return cells::NodeNorm::kRms;
  if (name == "none") return cells::NodeNorm::kNone;
  throw std::invalid_argument("unknown node normalization '" + name + "'");
}

Checkpoint make_checkpoint(const DerivedNet& net, nlohmann::json config,
                           const std::string& rng_state) {
  Checkpoint c;
  c.config = std::move(config);
  c.field_cardinalities = net.meta().field_cardinalities;
  c.k = net.k();
  c.node_norm = net.node_norm();
  c.genotype = net.genotype();
  for (const auto& p : net.named_weights()) {
    c.parameters.push_back({p.name, p.value.shape(), p.value.data_vec()});
  }
  c.rng_state = rng_state;
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json params = json::array();
  for (const auto& p : ckpt.parameters) {
    params.push_back({{"name", p.name}, {"shape", p.shape}, {"data", p.data}});
  }
  json j = {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"config", ckpt.config},
            {"fields", ckpt.field_cardinalities},
            {"k", ckpt.k},
            {"node_norm", node_norm_name(ckpt.node_norm)},
            {"genotype", json::parse(genotype::to_text(ckpt.genotype))},
            {"parameters", std::move(params)},
            {"rng_state", ckpt.rng_state}};
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CheckpointError(path.string() + ": malformed checkpoint: " + e.what());
  }
  const auto fail = [&](const std::string& what) {
    return CheckpointError(path.string() + ": " + what);
  };
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw fail("not a checkpoint file");
  }
  if (j.value("version", 0) != kCheckpointVersion) throw fail("unsupported checkpoint version");
  Checkpoint c;
  try {
    c.config = j.at("config");
    c.field_cardinalities = j.at("fields").get<std::vector<std::size_t>>();
    c.k = j.at("k").get<std::size_t>();
    c.node_norm = parse_node_norm(j.at("node_norm").get<std::string>());
    c.genotype = genotype::from_text(j.at("genotype").dump());
    for (const auto& p : j.at("parameters")) {
      NamedArray a{p.at("name").get<std::string>(), p.at("shape").get<ad::Shape>(),
                   p.at("data").get<std::vector<double>>()};
      if (ad::numel(a.shape) != a.data.size()) {
        throw fail("parameter " + a.name + ": data length does not match shape");
      }
      c.parameters.push_back(std::move(a));
    }
    c.rng_state = j.at("rng_state").get<std::string>();
  } catch (const json::exception& e) {
    throw fail(e.what());
  } catch (const genotype::GenotypeError& e) {
    throw fail(std::string("genotype: ") + e.what());
  }
  return c;
}

std::unique_ptr<DerivedNet> restore_network(const Checkpoint& ckpt) {
  const auto meta = data::make_meta(ckpt.field_cardinalities, 0);
  auto net = std::make_unique<DerivedNet>(ckpt.genotype, meta, ckpt.k, ckpt.node_norm, 0);
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& p : ckpt.parameters) {
    if (!by_name.emplace(p.name, &p).second) {
      throw CheckpointError("duplicate parameter " + p.name);
    }
  }
  auto params = net->named_weights();
  if (params.size() != by_name.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(by_name.size()) +
                          " parameters, network expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (it->second->shape != p.value.shape()) {
      throw CheckpointError("parameter " + p.name + ": shape " + ad::to_string(it->second->shape) +
                            " vs expected " + ad::to_string(p.value.shape()));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), p.value.data().begin());
  }
  return net;
}

}  // namespace ctrnas::model
