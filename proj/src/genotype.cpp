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

#include "ctrnas/genotype.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace ctrnas::genotype {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "ctrnas-genotype";
constexpr int kVersion = 1;

std::vector<double> plain_softmax(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - mx));
  for (auto& v : out) v /= z;
  return out;
}

CellGenotype discretize_cell(const cells::CellArch& arch, const cells::CellSpec& spec,
                             const std::vector<ops::OperatorKind>& op_space, std::size_t k_retain) {
  CellGenotype g;
  g.spec = spec;
  for (std::size_t j = spec.num_inputs; j < spec.node_count(); ++j) {
    std::vector<std::span<const double>> alphas;
    for (std::size_t i = 0; i < j; ++i) alphas.push_back(arch.alpha[spec.edge_index(j, i)].data());
    g.nodes.push_back(
        select_edges(alphas, arch.beta[j - spec.num_inputs].data(), op_space, k_retain));
  }
  return g;
}

std::string where(std::size_t cell, std::size_t node) {
  return "cells[" + std::to_string(cell) + "].nodes[" + std::to_string(node) + "]";
}

void validate_cell(const CellGenotype& c, std::size_t k_retain, std::size_t cell_idx) {
  const auto& spec = c.spec;
  const auto expected_inputs = spec.kind == cells::CellKind::kInteraction ? 1u : 2u;
  if (spec.num_inputs != expected_inputs) {
    throw GenotypeError("cells[" + std::to_string(cell_idx) + "]: " +
                        std::string(cells::cell_name(spec.kind)) + " cell must have " +
                        std::to_string(expected_inputs) + " input node(s)");
  }
  if (spec.nodes < 1 || spec.nodes > cells::kMaxNodes) {
    throw GenotypeError("cells[" + std::to_string(cell_idx) +
                        "]: intermediate node count must be in [1, 4]");
  }
  if (c.nodes.size() != spec.nodes) {
    throw GenotypeError("cells[" + std::to_string(cell_idx) + "]: expected " +
                        std::to_string(spec.nodes) + " nodes, found " +
                        std::to_string(c.nodes.size()));
  }
  for (std::size_t n = 0; n < c.nodes.size(); ++n) {
    const std::size_t node_id = spec.num_inputs + n;
    const auto& edges = c.nodes[n];
    const auto want = std::min(k_retain, node_id);
    if (edges.size() != want) {
      throw GenotypeError(where(cell_idx, n) + ": node " + std::to_string(node_id) + " must retain " +
                          std::to_string(want) + " edges, found " + std::to_string(edges.size()));
    }
    std::set<std::size_t> seen;
    for (const auto& e : edges) {
      if (e.from >= node_id) {
        throw GenotypeError(where(cell_idx, n) + ": edge from node " + std::to_string(e.from) +
                            " does not precede node " + std::to_string(node_id));
      }
      if (!seen.insert(e.from).second) {
        throw GenotypeError(where(cell_idx, n) + ": duplicate predecessor " +
                            std::to_string(e.from));
      }
    }
  }
}

json cell_to_json(const CellGenotype& c) {
  json nodes = json::array();
  for (std::size_t n = 0; n < c.nodes.size(); ++n) {
    json edges = json::array();
    for (const auto& e : c.nodes[n]) {
      edges.push_back({{"from", e.from}, {"op", std::string(ops::operator_name(e.op))}});
    }
    nodes.push_back({{"node", c.spec.num_inputs + n}, {"edges", std::move(edges)}});
  }
  return {{"cell", std::string(cells::cell_name(c.spec.kind))},
          {"inputs", c.spec.num_inputs},
          {"intermediate", c.spec.nodes},
          {"nodes", std::move(nodes)}};
}

void expect_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& at) {
  if (!obj.is_object()) throw GenotypeError(at + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) ==
        keys.end()) {
      throw GenotypeError(at + ": unknown key '" + key + "'");
    }
  }
  for (const char* k : keys) {
    if (!obj.contains(k)) throw GenotypeError(at + ": missing key '" + k + "'");
  }
}

std::size_t as_index(const json& v, const std::string& at) {
  if (!v.is_number_unsigned()) throw GenotypeError(at + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

CellGenotype cell_from_json(const json& j, std::size_t cell_idx) {
  const std::string at = "cells[" + std::to_string(cell_idx) + "]";
  expect_keys(j, {"cell", "inputs", "intermediate", "nodes"}, at);
  if (!j["cell"].is_string()) throw GenotypeError(at + ".cell: expected a string");
  const auto kind = cells::parse_cell(j["cell"].get<std::string>());
  if (!kind) throw GenotypeError(at + ".cell: unknown cell '" + j["cell"].get<std::string>() + "'");
  CellGenotype c;
  c.spec.kind = *kind;
  c.spec.num_inputs = as_index(j["inputs"], at + ".inputs");
  c.spec.nodes = as_index(j["intermediate"], at + ".intermediate");
  if (!j["nodes"].is_array()) throw GenotypeError(at + ".nodes: expected an array");
  for (std::size_t n = 0; n < j["nodes"].size(); ++n) {
    const auto& node = j["nodes"][n];
    const auto nat = where(cell_idx, n);
    expect_keys(node, {"node", "edges"}, nat);
    if (as_index(node["node"], nat + ".node") != c.spec.num_inputs + n) {
      throw GenotypeError(nat + ".node: expected node id " + std::to_string(c.spec.num_inputs + n));
    }
    if (!node["edges"].is_array()) throw GenotypeError(nat + ".edges: expected an array");
    std::vector<GenotypeEdge> edges;
    for (std::size_t e = 0; e < node["edges"].size(); ++e) {
      const auto& edge = node["edges"][e];
      const auto eat = nat + ".edges[" + std::to_string(e) + "]";
      expect_keys(edge, {"from", "op"}, eat);
      if (!edge["op"].is_string()) throw GenotypeError(eat + ".op: expected a string");
      const auto name = edge["op"].get<std::string>();
      const auto op = ops::parse_operator(name);
      if (!op) throw GenotypeError(eat + ".op: unknown operator '" + name + "'");
      edges.push_back({as_index(edge["from"], eat + ".from"), *op});
    }
    c.nodes.push_back(std::move(edges));
  }
  return c;
}

}  // namespace

double strength(std::span<const double> alpha, std::size_t o, std::span<const double> beta,
                std::size_t i) {
  if (alpha.empty() || beta.empty()) throw std::invalid_argument("strength: empty vector");
  return plain_softmax(alpha).at(o) * plain_softmax(beta).at(i);
}

std::vector<GenotypeEdge> select_edges(const std::vector<std::span<const double>>& alphas,
                                       std::span<const double> beta,
                                       const std::vector<ops::OperatorKind>& op_space,
                                       std::size_t k_retain) {
  if (alphas.size() != beta.size()) {
    throw std::invalid_argument("select_edges: one alpha vector per predecessor required");
  }
  const auto edge_w = plain_softmax(beta);
  struct Candidate {
    double strength;
    std::size_t from;
    std::size_t op;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i].size() != op_space.size()) {
      throw std::invalid_argument("select_edges: alpha length differs from operation space");
    }
    const auto op_w = plain_softmax(alphas[i]);
    for (std::size_t o = 0; o < op_w.size(); ++o) cands.push_back({op_w[o] * edge_w[i], i, o});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.strength, a.from, a.op) < std::tie(a.strength, b.from, b.op);
  });
  std::vector<GenotypeEdge> out;
  std::vector<bool> used(alphas.size(), false);
  for (const auto& c : cands) {
    if (out.size() == k_retain) break;
    if (used[c.from]) continue;
    used[c.from] = true;
    out.push_back({c.from, op_space[c.op]});
  }
  return out;
}

Genotype discretize(const cells::ArchParams& arch, const cells::CellSpec& interaction,
                    const cells::CellSpec& ensemble, std::size_t k_retain) {
  cells::check_arch(arch, interaction, ensemble);
  if (k_retain < 1) throw std::invalid_argument("k_retain must be at least 1");
  Genotype g;
  g.k_retain = k_retain;
  g.interaction = discretize_cell(arch.interaction, interaction, arch.ops, k_retain);
  g.ensemble = discretize_cell(arch.ensemble, ensemble, arch.ops, k_retain);
  return g;
}

Genotype uniform_genotype(ops::OperatorKind op, const cells::CellSpec& interaction,
                          const cells::CellSpec& ensemble, std::size_t k_retain) {
  auto make = [&](const cells::CellSpec& spec) {
    CellGenotype c;
    c.spec = spec;
    for (std::size_t j = spec.num_inputs; j < spec.node_count(); ++j) {
      std::vector<GenotypeEdge> edges;
      for (std::size_t i = 0; i < std::min(k_retain, j); ++i) edges.push_back({i, op});
      c.nodes.push_back(std::move(edges));
    }
    return c;
  };
  return {k_retain, make(interaction), make(ensemble)};
}

void validate(const Genotype& g) {
  if (g.k_retain < 1) throw GenotypeError("k_retain must be at least 1");
  if (g.interaction.spec.kind != cells::CellKind::kInteraction) {
    throw GenotypeError("cells[0]: first cell must be the interaction cell");
  }
  if (g.ensemble.spec.kind != cells::CellKind::kEnsemble) {
    throw GenotypeError("cells[1]: second cell must be the ensemble cell");
  }
  validate_cell(g.interaction, g.k_retain, 0);
  validate_cell(g.ensemble, g.k_retain, 1);
}

std::string to_text(const Genotype& g) {
  validate(g);
  json j = {{"format", kFormat},
            {"version", kVersion},
            {"k_retain", g.k_retain},
            {"cells", json::array({cell_to_json(g.interaction), cell_to_json(g.ensemble)})}};
  return j.dump(2) + "\n";
}

Genotype from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GenotypeError(std::string("malformed genotype: ") + e.what());
  }
  expect_keys(j, {"format", "version", "k_retain", "cells"}, "genotype");
  if (j["format"] != kFormat) throw GenotypeError("genotype.format: expected '" + std::string(kFormat) + "'");
  if (j["version"] != kVersion) throw GenotypeError("genotype.version: unsupported version");
  if (!j["cells"].is_array() || j["cells"].size() != 2) {
    throw GenotypeError("genotype.cells: expected exactly two cells");
  }
  Genotype g;
  g.k_retain = as_index(j["k_retain"], "genotype.k_retain");
  g.interaction = cell_from_json(j["cells"][0], 0);
  g.ensemble = cell_from_json(j["cells"][1], 1);
  validate(g);
  return g;
}

void save_genotype(const Genotype& g, const std::filesystem::path& path) {
  const auto text = to_text(g);
  std::ofstream out(path);
  if (!out) throw GenotypeError("cannot write genotype file " + path.string());
  out << text;
}

Genotype load_genotype(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GenotypeError("cannot open genotype file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_text(ss.str());
  } catch (const GenotypeError& e) {
    throw GenotypeError(path.string() + ": " + e.what());
  }
}

}  // namespace ctrnas::genotype
