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

#ifndef CTRNAS_CELLS_HPP_
#define CTRNAS_CELLS_HPP_

// The relaxed search cells.
//
// A cell is a DAG over feature matrices. Node ids are local to the cell:
// input nodes come first (0 for the interaction cell; 0 = higher-order
// features and 1 = low embedding for the ensemble cell), followed by N
// intermediate nodes. Every intermediate node j has a candidate edge from each
// node i < j. Edges are enumerated by target node, then by source node.
//
// Each edge mixes all candidate operators with softmax(alpha / tau) weights
// after batch-normalizing each operator's output; each node mixes its incoming
// edges with softmax(beta / tau) and is then RMS-normalized.

#include <cstddef>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "ctrnas/autodiff.hpp"
#include "ctrnas/ops.hpp"

namespace ctrnas::cells {

enum class CellKind : std::uint8_t { kInteraction, kEnsemble };

std::string_view cell_name(CellKind kind);
std::optional<CellKind> parse_cell(std::string_view name);

struct CellSpec {
  CellKind kind = CellKind::kInteraction;
  std::size_t num_inputs = 1;
  std::size_t nodes = 4;  // intermediate nodes

  static CellSpec interaction(std::size_t n);
  static CellSpec ensemble(std::size_t n);

  std::size_t node_count() const { return num_inputs + nodes; }
  std::size_t edge_count() const;
  // Edge from node `from` into intermediate node `to`.
  std::size_t edge_index(std::size_t to, std::size_t from) const;

  bool operator==(const CellSpec&) const = default;
};

inline constexpr std::size_t kMaxNodes = 4;

// Operation-level weights alpha (one |O| vector per edge) and edge-level
// weights beta (one vector over predecessors per intermediate node).
struct CellArch {
  std::vector<ad::Value> alpha;
  std::vector<ad::Value> beta;
};

struct ArchParams {
  std::vector<ops::OperatorKind> ops;
  CellArch interaction;
  CellArch ensemble;
  double tau = 1.0;

  std::vector<ad::Value> values() const;
};

// All-zero alpha and beta: the uniform mixture.
CellArch init_cell_arch(const CellSpec& spec, std::size_t num_ops);
ArchParams init_arch(const CellSpec& interaction, const CellSpec& ensemble,
                     std::vector<ops::OperatorKind> op_space);
ArchParams clone_arch(const ArchParams& arch);

// Validates shapes against the specs; throws on mismatch.
void check_arch(const ArchParams& arch, const CellSpec& interaction, const CellSpec& ensemble);

// One parameter set per candidate operator, aligned with the op space.
struct EdgeParams {
  std::vector<ops::OperatorParams> per_op;
};

struct CellParams {
  CellSpec spec;
  std::vector<EdgeParams> edges;
  // Interaction cell only: (m, N*m) field-mixing fusion of the stacked
  // intermediate nodes.
  ad::Value fusion;

  std::vector<ad::Value> weights() const;
};

CellParams init_cell_params(const CellSpec& spec, const std::vector<ops::OperatorKind>& op_space,
                            std::size_t m, std::size_t k, std::mt19937_64& rng);

enum class NodeNorm : std::uint8_t { kRms, kNone };

struct ForwardOptions {
  // Noise is injected into Skip only when training and lambda > 0.
  bool training = false;
  double noisy_lambda = 0.0;
  std::mt19937_64* rng = nullptr;
  NodeNorm node_norm = NodeNorm::kRms;
  double bn_eps = 1e-5;
};

ad::Value normalize_node(ad::Tape& t, const ad::Value& x, NodeNorm norm);

// Temperature softmax of a 1-D parameter vector.
ad::Value tempered_softmax(ad::Tape& t, const ad::Value& logits, double tau);

struct MixedEdgeOutput {
  ad::Value value;
  std::vector<double> op_weights;
};

MixedEdgeOutput mixed_edge_forward(ad::Tape& t, const ad::Value& x, const ad::Value& alpha,
                                   double tau, const EdgeParams& params,
                                   const ForwardOptions& options);

struct NodeOutput {
  ad::Value value;
  std::vector<double> edge_weights;
};

// Node `to` of a cell given the values of all nodes before it.
NodeOutput node_forward(ad::Tape& t, const std::vector<ad::Value>& predecessors,
                        const CellArch& arch, std::size_t to, double tau, const CellParams& params,
                        const ForwardOptions& options);

// (B, m, k) -> (B, m, k).
ad::Value interaction_cell_forward(ad::Tape& t, const ad::Value& e_high, const CellArch& arch,
                                   double tau, const CellParams& params,
                                   const ForwardOptions& options);

// (B, m, k), (B, m, k) -> (B, N*m*k), the flattened towers concatenated.
ad::Value ensemble_cell_forward(ad::Tape& t, const ad::Value& h, const ad::Value& e_low,
                                const CellArch& arch, double tau, const CellParams& params,
                                const ForwardOptions& options);

// Stacks intermediate nodes along the field axis and mixes them down to m
// fields with `fusion`.
ad::Value fuse_nodes(ad::Tape& t, const std::vector<ad::Value>& nodes, const ad::Value& fusion);
// Flattens each (B, m, k) node to (B, m*k) and concatenates.
ad::Value concat_towers(ad::Tape& t, const std::vector<ad::Value>& nodes);

}  // namespace ctrnas::cells

#endif  // CTRNAS_CELLS_HPP_
