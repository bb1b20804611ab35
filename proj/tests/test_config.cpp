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

#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "ctrnas/config.hpp"

namespace config = ctrnas::config;
using nlohmann::json;

namespace {

std::string error_of(const json& j) {
  try {
    config::from_json(j);
  } catch (const config::ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults survive a json round trip") {
  const config::RunConfig c;
  const auto j = config::to_json(c);
  CHECK(config::to_json(config::from_json(j)) == j);
  CHECK(j["model"]["ops"] == "skip,senet,attention,fm,slp,conv1d");
  CHECK(j["search"]["arch_lr"] == 3e-4);
  CHECK(j["train"]["lr"] == 1e-3);
  CHECK(config::to_json(config::from_json(json::object())) == j);
}

TEST_CASE("partial configs override only their keys") {
  const auto c = config::from_json({{"seed", 9}, {"search", {{"epochs", 3}, {"patience", 1}}}});
  CHECK(c.seed == 9);
  CHECK(c.search_epochs == 3);
  CHECK(c.search_config().effective_patience() == 1);
  CHECK(c.train_epochs == 30);
  CHECK(c.search_config().seed == 9);
  CHECK(c.train_config().seed == 9);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  CHECK(error_of({{"search", {{"epoch", 3}}}}).find("search.epoch: unknown key") !=
        std::string::npos);
  CHECK(error_of({{"colour", 1}}).find("unknown key") != std::string::npos);
  CHECK(error_of({{"train", {{"lr", "fast"}}}}).find("train.lr: wrong type") != std::string::npos);
  CHECK(error_of({{"data", {{"split", {0.5, 0.5}}}}}).find("three ratios") != std::string::npos);
}

TEST_CASE("operation spaces must contain skip") {
  CHECK(error_of({{"model", {{"ops", "fm,slp"}}}}).find("must contain skip") != std::string::npos);
  CHECK(config::parse_op_space("fm,skip").size() == 2);
  CHECK_THROWS_AS(config::parse_op_space("skip,mlp"), config::ConfigError);
}

TEST_CASE("invalid values fail validation") {
  CHECK(!error_of({{"model", {{"nodes", 5}}}}).empty());
  CHECK(!error_of({{"model", {{"nodes", 0}}}}).empty());
  CHECK(!error_of({{"model", {{"node_norm", "layer"}}}}).empty());
  CHECK(!error_of({{"ablate", {{"grids", {"colours"}}}}}).empty());
  CHECK(!error_of({{"train", {{"epochs", 0}}}}).empty());
}

TEST_CASE("config files round-trip") {
  config::RunConfig c;
  c.seed = 17;
  c.data_path = "somewhere.txt";
  const auto path = std::filesystem::temp_directory_path() / "ctrnas_config_roundtrip.json";
  config::save_config(c, path);
  const auto back = config::load_config(path);
  CHECK(config::to_json(back) == config::to_json(c));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(config::load_config("/nonexistent/config.json"), config::ConfigError);
}
