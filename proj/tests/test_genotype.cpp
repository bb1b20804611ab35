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

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

#include "ctrnas/genotype.hpp"

namespace cells = ctrnas::cells;
namespace genotype = ctrnas::genotype;
namespace ops = ctrnas::ops;
namespace oracle = ctrnas::oracle;
using ops::OperatorKind;

namespace {

const std::vector<OperatorKind> kAll(ops::kAllOperators.begin(), ops::kAllOperators.end());

std::vector<double> normal_vector(std::size_t n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> quantized_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<genotype::GenotypeEdge> select(const std::vector<std::vector<double>>& alphas,
                                           const std::vector<double>& beta,
                                           const std::vector<OperatorKind>& op_space,
                                           std::size_t k) {
  std::vector<std::span<const double>> views(alphas.begin(), alphas.end());
  return genotype::select_edges(views, beta, op_space, k);
}

cells::ArchParams random_arch(std::mt19937_64& rng, std::size_t n, bool ties) {
  const auto is = cells::CellSpec::interaction(n);
  const auto es = cells::CellSpec::ensemble(n);
  auto arch = cells::init_arch(is, es, kAll);
  for (auto* cell : {&arch.interaction, &arch.ensemble}) {
    for (auto& a : cell->alpha) {
      const auto v = ties ? quantized_vector(a.size(), rng) : normal_vector(a.size(), rng, 2.0);
      std::copy(v.begin(), v.end(), a.data().begin());
    }
    for (auto& b : cell->beta) {
      const auto v = ties ? quantized_vector(b.size(), rng) : normal_vector(b.size(), rng, 2.0);
      std::copy(v.begin(), v.end(), b.data().begin());
    }
  }
  return arch;
}

// Per-node brute force over a whole relaxed architecture.
genotype::CellGenotype brute_force_cell(const cells::CellArch& arch, const cells::CellSpec& spec,
                                        const std::vector<OperatorKind>& op_space, std::size_t k) {
  genotype::CellGenotype out{spec, {}};
  for (std::size_t j = 0; j < spec.nodes; ++j) {
    const std::size_t to = spec.num_inputs + j;
    std::vector<std::vector<double>> alphas;
    for (std::size_t i = 0; i < to; ++i) alphas.push_back(arch.alpha[spec.edge_index(to, i)].data_vec());
    out.nodes.push_back(oracle::brute_force_select(alphas, arch.beta[j].data_vec(), op_space, k));
  }
  return out;
}

std::string error_of(const std::string& text) {
  try {
    genotype::from_text(text);
  } catch (const genotype::GenotypeError& e) {
    return e.what();
  }
  return "";
}

std::string sample_text() {
  const auto g = genotype::uniform_genotype(OperatorKind::kFm, cells::CellSpec::interaction(3),
                                            cells::CellSpec::ensemble(2));
  return genotype::to_text(g);
}

}  // namespace

TEST_CASE("strength of uniform weights") {
  const std::vector<double> alpha(6, 0.0), beta(2, 0.0);
  for (std::size_t o = 0; o < 6; ++o) {
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(genotype::strength(alpha, o, beta, i) == doctest::Approx(1.0 / 12.0));
    }
  }
}

TEST_CASE("strongest pair across two edges") {
  const std::vector<double> a{std::log(0.5), std::log(0.3), std::log(0.2)};
  const std::vector<double> b{std::log(0.9), std::log(0.1), -1000.0};
  const std::vector<double> beta{std::log(0.6), std::log(0.4)};
  CHECK(genotype::strength(a, 0, beta, 0) == doctest::Approx(0.30));
  CHECK(genotype::strength(b, 0, beta, 1) == doctest::Approx(0.36));
  const std::vector<OperatorKind> space{OperatorKind::kSkip, OperatorKind::kSenet,
                                        OperatorKind::kSelfAttention};
  const auto top = select({a, b}, beta, space, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0] == genotype::GenotypeEdge{1, OperatorKind::kSkip});
  const auto both = select({a, b}, beta, space, 2);
  CHECK(both == std::vector<genotype::GenotypeEdge>{{1, OperatorKind::kSkip},
                                                    {0, OperatorKind::kSkip}});
}

TEST_CASE("strengths of one node sum to one and ignore alpha shifts") {
  std::mt19937_64 rng(1);
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t preds = 1 + draw % 5;
    std::vector<std::vector<double>> alphas;
    for (std::size_t i = 0; i < preds; ++i) alphas.push_back(normal_vector(6, rng, 3.0));
    const auto beta = normal_vector(preds, rng, 3.0);
    double total = 0.0;
    for (std::size_t i = 0; i < preds; ++i) {
      auto shifted = alphas[i];
      for (auto& v : shifted) v += 11.0;
      for (std::size_t o = 0; o < 6; ++o) {
        const double s = genotype::strength(alphas[i], o, beta, i);
        total += s;
        CHECK(std::abs(genotype::strength(shifted, o, beta, i) - s) <= 1e-12);
      }
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("node selection matches brute force") {
  std::mt19937_64 rng(2);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t preds = 1 + draw % 4;
    const std::size_t nops = 1 + (draw / 4) % 6;
    const std::size_t k = 1 + draw % 3;
    const bool ties = draw % 5 == 0;
    std::vector<OperatorKind> space(kAll.begin(), kAll.begin() + static_cast<long>(nops));
    std::vector<std::vector<double>> alphas;
    for (std::size_t i = 0; i < preds; ++i) {
      alphas.push_back(ties ? quantized_vector(nops, rng) : normal_vector(nops, rng, 2.0));
    }
    const auto beta = ties ? quantized_vector(preds, rng) : normal_vector(preds, rng, 2.0);
    const auto got = select(alphas, beta, space, k);
    INFO("draw " << draw);
    CHECK(got == oracle::brute_force_select(alphas, beta, space, k));
    CHECK(got.size() == std::min(k, preds));
  }
}

TEST_CASE("discretize matches per-node brute force") {
  std::mt19937_64 rng(3);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 1 + draw % 4;
    const auto arch = random_arch(rng, n, draw % 4 == 0);
    const auto is = cells::CellSpec::interaction(n);
    const auto es = cells::CellSpec::ensemble(n);
    const auto g = genotype::discretize(arch, is, es, 2);
    CHECK(g.interaction == brute_force_cell(arch.interaction, is, kAll, 2));
    CHECK(g.ensemble == brute_force_cell(arch.ensemble, es, kAll, 2));
    CHECK(g.interaction.nodes[0].size() == 1);
    for (std::size_t j = 1; j < n; ++j) CHECK(g.interaction.nodes[j].size() == 2);
    CHECK_NOTHROW(genotype::validate(g));
    CHECK(genotype::discretize(arch, is, es, 2) == g);
  }
}

TEST_CASE("discretize ignores temperature and softmax shifts") {
  std::mt19937_64 rng(4);
  for (int draw = 0; draw < 100; ++draw) {
    auto arch = random_arch(rng, 4, false);
    const auto is = cells::CellSpec::interaction(4);
    const auto es = cells::CellSpec::ensemble(4);
    const auto g = genotype::discretize(arch, is, es);
    auto moved = cells::clone_arch(arch);
    moved.tau = 3.0;
    for (auto& a : moved.ensemble.alpha) {
      for (auto& v : a.data()) v -= 4.0;
    }
    for (auto& v : moved.interaction.beta[2].data()) v += 9.0;
    CHECK(genotype::discretize(moved, is, es) == g);
  }
}

TEST_CASE("uniform genotype keeps the lowest predecessors") {
  const auto g = genotype::uniform_genotype(OperatorKind::kSkip, cells::CellSpec::interaction(4),
                                            cells::CellSpec::ensemble(4));
  CHECK(g.interaction.nodes[0] == std::vector<genotype::GenotypeEdge>{{0, OperatorKind::kSkip}});
  CHECK(g.ensemble.nodes[3] == std::vector<genotype::GenotypeEdge>{{0, OperatorKind::kSkip},
                                                                   {1, OperatorKind::kSkip}});
}

TEST_CASE("genotype text round-trips") {
  std::mt19937_64 rng(5);
  const auto g = genotype::discretize(random_arch(rng, 4, false), cells::CellSpec::interaction(4),
                                      cells::CellSpec::ensemble(4));
  CHECK(genotype::from_text(genotype::to_text(g)) == g);
  const auto path = std::filesystem::temp_directory_path() / "ctrnas_genotype_roundtrip.txt";
  genotype::save_genotype(g, path);
  CHECK(genotype::load_genotype(path) == g);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(genotype::load_genotype("/nonexistent/genotype.txt"), genotype::GenotypeError);
}

TEST_CASE("invalid genotype files are rejected with a location") {
  auto j = nlohmann::json::parse(sample_text());
  auto dup = j;
  dup["cells"][0]["nodes"][1]["edges"][1]["from"] = dup["cells"][0]["nodes"][1]["edges"][0]["from"];
  const auto dup_msg = error_of(dup.dump());
  CHECK(dup_msg.find("duplicate predecessor") != std::string::npos);
  CHECK(dup_msg.find("cells[0].nodes[1]") != std::string::npos);

  auto unknown = j;
  unknown["cells"][1]["nodes"][0]["edges"][0]["op"] = "mlp";
  CHECK(error_of(unknown.dump()).find("unknown operator 'mlp'") != std::string::npos);

  auto forward = j;
  forward["cells"][0]["nodes"][0]["edges"][0]["from"] = 1;
  CHECK(!error_of(forward.dump()).empty());

  auto extra = j;
  extra["cells"][0]["colour"] = "red";
  CHECK(error_of(extra.dump()).find("unknown key 'colour'") != std::string::npos);

  auto short_node = j;
  short_node["cells"][0]["nodes"][2]["edges"].erase(1);
  CHECK(error_of(short_node.dump()).find("cells[0].nodes[2]") != std::string::npos);

  CHECK(error_of("{not json").find("malformed") != std::string::npos);
}
