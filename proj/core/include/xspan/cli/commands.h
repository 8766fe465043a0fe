// Copyright 2026 The XSpan Authors
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

#ifndef XSPAN_CLI_COMMANDS_H_
#define XSPAN_CLI_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "xspan/cli/selftest.h"

namespace xspan::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 1,
  kExitNumericHalt = 2,
  kExitSelftestFailure = 3,
};

// Trains from a JSON config. Writes config.json, metrics.csv and
// checkpoints into the run directory; with `resume`, continues from the
// newest checkpoint there.
int cmd_train(const std::filesystem::path& config_path, bool resume, std::ostream& log);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::optional<int64_t> max_span_override;
  bool prune = true;
  int64_t max_segments = -1;
};

// Prints a metrics JSON object to `out`.
int cmd_eval(const EvalRequest& request, std::ostream& out, std::ostream& log);

// Writes the span trace CSV (layer,position,token,span) of `input` to `out`.
// Token files are whitespace-separated ids; char_lm checkpoints read raw
// text instead.
int cmd_analyze(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                std::ostream& out, std::ostream& log);

int cmd_selftest(Fault fault, std::ostream& out);

// Parses argv and dispatches. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace xspan::cli

#endif  // XSPAN_CLI_COMMANDS_H_
