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

#include "ctrnas/cells.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ctrnas::cells {

std::string_view cell_name(CellKind kind) {
  return kind == CellKind::kInteraction ? "interaction" : "ensemble";
}

std::optional<CellKind> parse_cell(std::string_view name) {
  if (name == "interaction") return CellKind::kInteraction;
  if (name == "ensemble") return CellKind::kEnsemble;
  return std::nullopt;
}

CellSpec CellSpec::interaction(std::size_t n) { return {CellKind::kInteraction, 1, n}; }
CellSpec CellSpec::ensemble(std::size_t n) { return {CellKind::kEnsemble, 2, n}; }

std::size_t CellSpec::edge_count() const {
  std::size_t count = 0;
  for (std::size_t j = num_inputs; j < node_count(); ++j) count += j;
  return count;
}

std::size_t CellSpec::edge_index(std::size_t to, std::size_t from) const {
  if (to < num_inputs || to >= node_count() || from >= to) {
    throw std::out_of_range("edge (" + std::to_string(from) + " -> " + std::to_string(to) +
                            ") not in " + std::string(cell_name(kind)) + " cell");
  }
  std::size_t idx = 0;
  for (std::size_t j = num_inputs; j < to; ++j) idx += j;
  return idx + from;
}

std::vector<ad::Value> ArchParams::values() const {
  std::vector<ad::Value> out;
  for (const auto* cell : {&interaction, &ensemble}) {
    out.insert(out.end(), cell->alpha.begin(), cell->alpha.end());
    out.insert(out.end(), cell->beta.begin(), cell->beta.end());
  }
  return out;
}

CellArch init_cell_arch(const CellSpec& spec, std::size_t num_ops) {
  CellArch arch;
  for (std::size_t e = 0; e < spec.edge_count(); ++e) {
    arch.alpha.push_back(ad::Value::zeros({num_ops}, true));
  }
  for (std::size_t j = spec.num_inputs; j < spec.node_count(); ++j) {
    arch.beta.push_back(ad::Value::zeros({j}, true));
  }
  return arch;
}

ArchParams init_arch(const CellSpec& interaction, const CellSpec& ensemble,
                     std::vector<ops::OperatorKind> op_space) {
  if (op_space.empty()) throw std::invalid_argument("operation space is empty");
  ArchParams arch;
  arch.interaction = init_cell_arch(interaction, op_space.size());
  arch.ensemble = init_cell_arch(ensemble, op_space.size());
  arch.ops = std::move(op_space);
  return arch;
}

ArchParams clone_arch(const ArchParams& arch) {
  ArchParams out;
  out.ops = arch.ops;
  out.tau = arch.tau;
  auto copy = [](const CellArch& src) {
    CellArch dst;
    for (const auto& a : src.alpha) dst.alpha.push_back(ad::clone(a, true));
    for (const auto& b : src.beta) dst.beta.push_back(ad::clone(b, true));
    return dst;
  };
  out.interaction = copy(arch.interaction);
  out.ensemble = copy(arch.ensemble);
  return out;
}

void check_arch(const ArchParams& arch, const CellSpec& interaction, const CellSpec& ensemble) {
  auto check = [&](const CellArch& cell, const CellSpec& spec) {
    if (cell.alpha.size() != spec.edge_count() || cell.beta.size() != spec.nodes) {
      throw std::invalid_argument(std::string(cell_name(spec.kind)) +
                                  " cell: architecture encoding does not match cell layout");
    }
    for (const auto& a : cell.alpha) {
      if (a.size() != arch.ops.size()) {
        throw std::invalid_argument("alpha length differs from operation space size");
      }
    }
    for (std::size_t j = 0; j < spec.nodes; ++j) {
      if (cell.beta[j].size() != spec.num_inputs + j) {
        throw std::invalid_argument("beta length differs from predecessor count");
      }
    }
  };
  check(arch.interaction, interaction);
  check(arch.ensemble, ensemble);
  if (!(arch.tau > 0.0)) throw std::invalid_argument("temperature must be positive");
}

std::vector<ad::Value> CellParams::weights() const {
  std::vector<ad::Value> out;
  for (const auto& e : edges) {
    for (const auto& op : e.per_op) {
      for (const auto& [name, v] : op.trainables) out.push_back(v);
    }
  }
  if (fusion.defined()) out.push_back(fusion);
  return out;
}

CellParams init_cell_params(const CellSpec& spec, const std::vector<ops::OperatorKind>& op_space,
                            std::size_t m, std::size_t k, std::mt19937_64& rng) {
  if (spec.nodes < 1 || spec.nodes > kMaxNodes) {
    throw std::invalid_argument("intermediate node count must be in [1, 4]");
  }
  CellParams p;
  p.spec = spec;
  p.edges.resize(spec.edge_count());
  for (auto& e : p.edges) {
    for (auto kind : op_space) e.per_op.push_back(ops::init_operator(kind, m, k, rng));
  }
  if (spec.kind == CellKind::kInteraction) {
    std::normal_distribution<double> dist(0.0, ops::kWeightInitStddev);
    std::vector<double> c(m * spec.nodes * m);
    for (auto& v : c) v = dist(rng);
    p.fusion = ad::Value::leaf({m, spec.nodes * m}, std::move(c), true);
  }
  return p;
}

ad::Value normalize_node(ad::Tape& t, const ad::Value& x, NodeNorm norm) {
  return norm == NodeNorm::kRms ? ad::rms_normalize(t, x) : x;
}

ad::Value tempered_softmax(ad::Tape& t, const ad::Value& logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  return ad::softmax(t, tau == 1.0 ? logits : ad::scale(t, logits, 1.0 / tau), 0);
}

MixedEdgeOutput mixed_edge_forward(ad::Tape& t, const ad::Value& x, const ad::Value& alpha,
                                   double tau, const EdgeParams& params,
                                   const ForwardOptions& options) {
  if (x.rank() != 3) throw std::invalid_argument("mixed edge: expected (B, m, k) input");
  if (x.dim(0) < 2) {
    throw std::invalid_argument("mixed edge: batch normalization needs a batch of at least 2");
  }
  if (alpha.size() != params.per_op.size()) {
    throw std::invalid_argument("mixed edge: alpha has " + std::to_string(alpha.size()) +
                                " entries for " + std::to_string(params.per_op.size()) +
                                " operators");
  }
  auto weights = tempered_softmax(t, alpha, tau);
  std::vector<ad::Value> outs;
  outs.reserve(params.per_op.size());
  for (const auto& op : params.per_op) {
    ad::Value y;
    if (op.kind == ops::OperatorKind::kSkip && options.training && options.noisy_lambda > 0.0) {
      if (options.rng == nullptr) throw std::invalid_argument("noisy skip needs an rng");
      y = ops::apply_noisy_skip(t, x, options.noisy_lambda, *options.rng);
    } else {
      y = ops::apply(t, x, op);
    }
    outs.push_back(ad::batch_norm(t, y, options.bn_eps));
  }
  MixedEdgeOutput out;
  out.op_weights.assign(weights.data().begin(), weights.data().end());
  out.value = ad::weighted_sum(t, outs, weights);
  return out;
}

NodeOutput node_forward(ad::Tape& t, const std::vector<ad::Value>& predecessors,
                        const CellArch& arch, std::size_t to, double tau, const CellParams& params,
                        const ForwardOptions& options) {
  const auto& spec = params.spec;
  if (predecessors.size() != to || to < spec.num_inputs) {
    throw std::invalid_argument("node_forward: node " + std::to_string(to) + " given " +
                                std::to_string(predecessors.size()) + " predecessors");
  }
  std::vector<ad::Value> edges;
  edges.reserve(to);
  for (std::size_t i = 0; i < to; ++i) {
    const auto e = spec.edge_index(to, i);
    edges.push_back(
        mixed_edge_forward(t, predecessors[i], arch.alpha[e], tau, params.edges[e], options).value);
  }
  auto coeffs = tempered_softmax(t, arch.beta[to - spec.num_inputs], tau);
  NodeOutput out;
  out.edge_weights.assign(coeffs.data().begin(), coeffs.data().end());
  out.value = normalize_node(t, ad::weighted_sum(t, edges, coeffs), options.node_norm);
  return out;
}

ad::Value fuse_nodes(ad::Tape& t, const std::vector<ad::Value>& nodes, const ad::Value& fusion) {
  auto stacked = nodes.size() == 1 ? nodes.front() : ad::concat(t, nodes, 1);
  return ad::field_mix(t, fusion, stacked);
}

ad::Value concat_towers(ad::Tape& t, const std::vector<ad::Value>& nodes) {
  std::vector<ad::Value> flat;
  flat.reserve(nodes.size());
  for (const auto& n : nodes) {
    flat.push_back(ad::reshape(t, n, {n.dim(0), n.dim(1) * n.dim(2)}));
  }
  return flat.size() == 1 ? flat.front() : ad::concat(t, flat, 1);
}

namespace {

std::vector<ad::Value> run_cell(ad::Tape& t, std::vector<ad::Value> values, const CellArch& arch,
                                double tau, const CellParams& params,
                                const ForwardOptions& options) {
  const auto& spec = params.spec;
  for (std::size_t j = spec.num_inputs; j < spec.node_count(); ++j) {
    values.push_back(node_forward(t, values, arch, j, tau, params, options).value);
  }
  return {values.begin() + static_cast<std::ptrdiff_t>(spec.num_inputs), values.end()};
}

}  // namespace

ad::Value interaction_cell_forward(ad::Tape& t, const ad::Value& e_high, const CellArch& arch,
                                   double tau, const CellParams& params,
                                   const ForwardOptions& options) {
  if (params.spec.kind != CellKind::kInteraction) {
    throw std::invalid_argument("interaction_cell_forward: wrong cell parameters");
  }
  const auto nodes = run_cell(t, {e_high}, arch, tau, params, options);
  return fuse_nodes(t, nodes, params.fusion);
}

ad::Value ensemble_cell_forward(ad::Tape& t, const ad::Value& h, const ad::Value& e_low,
                                const CellArch& arch, double tau, const CellParams& params,
                                const ForwardOptions& options) {
  if (params.spec.kind != CellKind::kEnsemble) {
    throw std::invalid_argument("ensemble_cell_forward: wrong cell parameters");
  }
  if (h.shape() != e_low.shape()) {
    throw std::invalid_argument("ensemble cell inputs differ in shape: " + ad::to_string(h.shape()) +
                                " vs " + ad::to_string(e_low.shape()));
  }
  const auto nodes = run_cell(t, {h, e_low}, arch, tau, params, options);
  return concat_towers(t, nodes);
}

}  // namespace ctrnas::cells
