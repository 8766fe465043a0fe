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

#ifndef XSPAN_CLI_SELFTEST_H_
#define XSPAN_CLI_SELFTEST_H_

#include <ostream>
#include <string>
#include <vector>

namespace xspan::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst deviation found
  double tolerance = 0.0;  // allowed deviation
  std::string detail;
  double seconds = 0.0;
};

struct SelftestReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

enum class Fault {
  kNone,
  // Scales the ramp-clamp gradient by 0.5 for the duration of the run.
  kRampGradient,
};

// Mask values at r in {0, -R/2, -R, R} and the renormalization examples.
CheckResult check_mask_algebra();
// Finite-difference checks of the differentiable ops over `seeds` seeds.
CheckResult check_op_gradients(int seeds);
// Every parameter of a tiny two-layer model against central differences.
CheckResult check_end_to_end_gradient();
// Brute-force memory size against R - 1 + mean(floor(e)).
CheckResult check_memory_size_identity();
// Logits with and without pruning, bit for bit.
CheckResult check_pruning_soundness();
// Forced unit masks against fixed span L + R, and unbounded fixed span
// against a direct quadratic-attention decoder.
CheckResult check_baseline_equivalence();

SelftestReport run_selftest(Fault fault = Fault::kNone);
void print_report(std::ostream& out, const SelftestReport& report);

}  // namespace xspan::cli

#endif  // XSPAN_CLI_SELFTEST_H_
