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

#ifndef XSPAN_TASKS_COPY_TASK_H_
#define XSPAN_TASKS_COPY_TASK_H_

#include <cstdint>

#include "xspan/numerics/rng.h"
#include "xspan/tasks/task_sample.h"

// Copy task: n copies of A, D distractors B, a GO marker, then n + 1 answer
// slots. The answer is n copies of A followed by END:
//
//   input   A A A B B B B B GO _ _ _ _
//   target                     A A A END   (scored only here)
namespace xspan::tasks {

namespace copy_tokens {
inline constexpr int kA = 0;
inline constexpr int kB = 1;
inline constexpr int kGo = 2;
inline constexpr int kSlot = 3;
inline constexpr int kEnd = 4;
inline constexpr int kVocabSize = 5;
}  // namespace copy_tokens

struct CopyConfig {
  int64_t distance = 256;  // D
  int min_count = 1;
  int max_count = 8;
  // Throws ConfigError unless D >= 1 and 1 <= min <= max <= D.
  void validate() const;
};

// Sample with an explicit count n.
TaskSample make_copy_sample(int64_t distance, int count);

// n ~ U{min_count..max_count}.
TaskSample gen_copy(const CopyConfig& config, numerics::Rng& rng);

// Number of leading A tokens, i.e. the count the answer must reproduce.
int copy_count(const TaskSample& sample);

}  // namespace xspan::tasks

#endif  // XSPAN_TASKS_COPY_TASK_H_
