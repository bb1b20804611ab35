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

#ifndef CTRNAS_MODEL_HPP_
#define CTRNAS_MODEL_HPP_

// End-to-end networks: dual embeddings, interaction cell, ensemble cell and
// a logistic head.
//
// Parameters carry dotted names, e.g. "embedding.high",
// "interaction.edge.2.0.fm.W", "interaction.fusion", "head.w". Architecture
// weights of the supernet are kept apart from these.
//
// Checkpoint files are JSON:
//
//   {
//     "format": "ctrnas-checkpoint",
//     "version": 1,
//     "config": {...},            // echo of the run configuration
//     "fields": [c_0, ...],       // field cardinalities
//     "k": 10,
//     "node_norm": "rms",
//     "genotype": {...},          // as in genotype files
//     "parameters": [{"name": ..., "shape": [...], "data": [...]}, ...],
//     "rng_state": "..."          // textual std::mt19937_64 state
//   }
//
// Doubles are written in shortest round-trip form.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrnas/autodiff.hpp"
#include "ctrnas/cells.hpp"
#include "ctrnas/data.hpp"
#include "ctrnas/embedding.hpp"
#include "ctrnas/genotype.hpp"
#include "ctrnas/ops.hpp"

namespace ctrnas::model {

inline constexpr double kProbClip = 1e-7;

struct ModelConfig {
  std::size_t k = 10;
  std::size_t interaction_nodes = 4;
  std::size_t ensemble_nodes = 4;
  std::vector<ops::OperatorKind> ops{ops::kAllOperators.begin(), ops::kAllOperators.end()};
  cells::NodeNorm node_norm = cells::NodeNorm::kRms;
};

struct NamedParam {
  std::string name;
  ad::Value value;
};

class Network {
 public:
  explicit Network(data::DatasetMeta meta) : meta_(std::move(meta)) {}
  virtual ~Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // Pre-sigmoid scores, shape (B).
  virtual ad::Value logits(ad::Tape& t, const data::Batch& batch,
                           const cells::ForwardOptions& options) const = 0;
  // Trainable non-architecture parameters in a fixed order.
  virtual std::vector<NamedParam> named_weights() const = 0;
  // True when the forward pass normalizes with batch statistics.
  virtual bool uses_batch_statistics() const = 0;

  const data::DatasetMeta& meta() const { return meta_; }
  std::vector<ad::Value> weights() const;
  std::size_t parameter_count(bool include_embeddings = false) const;

 private:
  data::DatasetMeta meta_;
};

// sigmoid(logits), shape (B).
ad::Value predict(ad::Tape& t, const Network& net, const data::Batch& batch,
                  const cells::ForwardOptions& options = {});

// Mean binary cross-entropy with predictions clipped to [1e-7, 1 - 1e-7].
ad::Value logloss(ad::Tape& t, const ad::Value& prob, std::span<const double> labels);
double logloss(std::span<const double> labels, std::span<const double> prob);

class SuperNet : public Network {
 public:
  SuperNet(const data::DatasetMeta& meta, const ModelConfig& config, std::uint64_t seed);

  ad::Value logits(ad::Tape& t, const data::Batch& batch,
                   const cells::ForwardOptions& options) const override;
  std::vector<NamedParam> named_weights() const override;
  bool uses_batch_statistics() const override { return true; }

  const ModelConfig& config() const { return config_; }
  cells::ArchParams& arch() { return arch_; }
  const cells::ArchParams& arch() const { return arch_; }
  const cells::CellParams& interaction() const { return interaction_; }
  const cells::CellParams& ensemble() const { return ensemble_; }
  const embedding::DualEmbedding& embeddings() const { return dual_; }
  const ad::Value& head_w() const { return head_w_; }
  const ad::Value& head_b() const { return head_b_; }

 private:
  ModelConfig config_;
  embedding::DualEmbedding dual_;
  cells::CellParams interaction_;
  cells::CellParams ensemble_;
  ad::Value head_w_;  // (N*m*k, 1)
  ad::Value head_b_;  // (1)
  cells::ArchParams arch_;
};

struct DerivedEdge {
  std::size_t from = 0;
  ops::OperatorParams op;
};

struct DerivedCell {
  cells::CellSpec spec;
  std::vector<std::vector<DerivedEdge>> nodes;
  ad::Value fusion;  // interaction cell only
};

// Discrete network: every intermediate node is the plain sum of its retained
// operator outputs followed by the node normalization.
class DerivedNet : public Network {
 public:
  DerivedNet(const genotype::Genotype& g, const data::DatasetMeta& meta, std::size_t k,
             cells::NodeNorm node_norm, std::uint64_t seed);

  ad::Value logits(ad::Tape& t, const data::Batch& batch,
                   const cells::ForwardOptions& options) const override;
  std::vector<NamedParam> named_weights() const override;
  bool uses_batch_statistics() const override { return false; }

  const genotype::Genotype& genotype() const { return genotype_; }
  std::size_t k() const { return k_; }
  cells::NodeNorm node_norm() const { return node_norm_; }
  const DerivedCell& interaction() const { return interaction_; }
  const DerivedCell& ensemble() const { return ensemble_; }

 private:
  genotype::Genotype genotype_;
  std::size_t k_;
  cells::NodeNorm node_norm_;
  embedding::DualEmbedding dual_;
  DerivedCell interaction_;
  DerivedCell ensemble_;
  ad::Value head_w_;
  ad::Value head_b_;
};

std::unique_ptr<DerivedNet> derive_network(const genotype::Genotype& g,
                                           const data::DatasetMeta& meta,
                                           const ModelConfig& config, std::uint64_t seed);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::size_t> field_cardinalities;
  std::size_t k = 0;
  cells::NodeNorm node_norm = cells::NodeNorm::kRms;
  genotype::Genotype genotype;
  std::vector<NamedArray> parameters;
  std::string rng_state;
};

Checkpoint make_checkpoint(const DerivedNet& net, nlohmann::json config,
                           const std::string& rng_state);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Rebuilds the network and copies every named parameter; the set of names and
// their shapes must match exactly.
std::unique_ptr<DerivedNet> restore_network(const Checkpoint& ckpt);

std::string node_norm_name(cells::NodeNorm norm);
cells::NodeNorm parse_node_norm(const std::string& name);

}  // namespace ctrnas::model

#endif  // CTRNAS_MODEL_HPP_
