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

#include "xspan/tasks/task_sample.h"

#include <algorithm>
#include <stdexcept>

namespace xspan::tasks {

int64_t TaskSample::scored_count() const {
  return std::count_if(loss_mask.begin(), loss_mask.end(), [](uint8_t m) { return m != 0; });
}

void TaskSample::validate() const {
  if (target_tokens.size() != input_tokens.size() || loss_mask.size() != input_tokens.size()) {
    throw std::invalid_argument("task sample: input, target and mask lengths differ");
  }
  if (scored_count() == 0) throw std::invalid_argument("task sample: no scored position");
}

}  // namespace xspan::tasks
