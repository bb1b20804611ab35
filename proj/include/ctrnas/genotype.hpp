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

#ifndef CTRNAS_GENOTYPE_HPP_
#define CTRNAS_GENOTYPE_HPP_

// Discrete architectures and the top-k strength rule that produces them.
//
// Genotype files are JSON:
//
//   {
//     "format": "ctrnas-genotype",
//     "version": 1,
//     "k_retain": 2,
//     "cells": [
//       {
//         "cell": "interaction",
//         "inputs": 1,
//         "intermediate": 4,
//         "nodes": [
//           {"node": 1, "edges": [{"from": 0, "op": "fm"}]},
//           {"node": 2, "edges": [{"from": 1, "op": "slp"}, {"from": 0, "op": "skip"}]},
//           ...
//         ]
//       },
//       {"cell": "ensemble", "inputs": 2, "intermediate": 4, "nodes": [...]}
//     ]
//   }
//
// Node ids are local to each cell (inputs first). Every intermediate node
// lists min(k_retain, node id) edges from distinct earlier nodes, strongest
// first. Unknown keys are rejected.

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrnas/cells.hpp"
#include "ctrnas/ops.hpp"

namespace ctrnas::genotype {

class GenotypeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenotypeEdge {
  std::size_t from = 0;
  ops::OperatorKind op = ops::OperatorKind::kSkip;

  bool operator==(const GenotypeEdge&) const = default;
};

struct CellGenotype {
  cells::CellSpec spec;
  // nodes[j] holds the retained edges of intermediate node spec.num_inputs + j.
  std::vector<std::vector<GenotypeEdge>> nodes;

  bool operator==(const CellGenotype&) const = default;
};

inline constexpr std::size_t kDefaultRetain = 2;

struct Genotype {
  std::size_t k_retain = kDefaultRetain;
  CellGenotype interaction;
  CellGenotype ensemble;

  bool operator==(const Genotype&) const = default;
};

// softmax(alpha)_o * softmax(beta)_i, without temperature.
double strength(std::span<const double> alpha, std::size_t o, std::span<const double> beta,
                std::size_t i);

// Selects the retained edges of one node: alphas[i] is the operator vector of
// the edge from predecessor i. Pairs are ranked by strength with ties broken
// toward the lower predecessor id, then the lower operator index, and taken
// greedily under the distinct-predecessor constraint.
std::vector<GenotypeEdge> select_edges(const std::vector<std::span<const double>>& alphas,
                                       std::span<const double> beta,
                                       const std::vector<ops::OperatorKind>& op_space,
                                       std::size_t k_retain);

Genotype discretize(const cells::ArchParams& arch, const cells::CellSpec& interaction,
                    const cells::CellSpec& ensemble, std::size_t k_retain = kDefaultRetain);

// Every node keeps its lowest-numbered predecessors, all with operator `op`.
Genotype uniform_genotype(ops::OperatorKind op, const cells::CellSpec& interaction,
                          const cells::CellSpec& ensemble, std::size_t k_retain = kDefaultRetain);

void validate(const Genotype& g);

std::string to_text(const Genotype& g);
Genotype from_text(const std::string& text);

void save_genotype(const Genotype& g, const std::filesystem::path& path);
Genotype load_genotype(const std::filesystem::path& path);

}  // namespace ctrnas::genotype

#endif  // CTRNAS_GENOTYPE_HPP_
