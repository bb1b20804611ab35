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

#ifndef CTRNAS_CLI_HPP_
#define CTRNAS_CLI_HPP_

// Command-line driver. Subcommands and the files they write into --out:
//
//   synth   data.txt
//   search  arch.json, genotype.txt, search_log.csv
//   derive  genotype.txt                (from --arch, default <out>/arch.json)
//   train   checkpoint.json, train_log.csv, test_report.json
//                                       (from --genotype, default <out>/genotype.txt)
//   eval    eval_report.json            (from --checkpoint, default <out>/checkpoint.json)
//   ablate  ablate.csv, ablate_status.csv
//
// Every subcommand also writes config.json, the resolved configuration, which
// can be passed back through --config to repeat the run.
//
// Exit codes: 0 on success, 2 when an input file is missing or the command
// line is malformed, 1 for any other failure.

#include <ostream>

namespace ctrnas::cli {

inline constexpr int kExitFailure = 1;
inline constexpr int kExitMissingInput = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctrnas::cli

#endif  // CTRNAS_CLI_HPP_
