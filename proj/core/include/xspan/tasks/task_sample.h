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

#ifndef XSPAN_TASKS_TASK_SAMPLE_H_
#define XSPAN_TASKS_TASK_SAMPLE_H_

#include <cstdint>
#include <vector>

namespace xspan::tasks {

// Supervised sequence: the model reads input_tokens and is scored on
// target_tokens where loss_mask is set.
struct TaskSample {
  std::vector<int> input_tokens;
  std::vector<int> target_tokens;
  std::vector<uint8_t> loss_mask;

  std::size_t size() const { return input_tokens.size(); }
  int64_t scored_count() const;
  // Throws std::invalid_argument on unequal lengths or an empty loss mask.
  void validate() const;
};

}  // namespace xspan::tasks

#endif  // XSPAN_TASKS_TASK_SAMPLE_H_
