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

#include "xspan/tasks/copy_task.h"

#include <string>

#include "xspan/errors.h"

namespace xspan::tasks {

void CopyConfig::validate() const {
  if (distance < 1) throw ConfigError("copy task: distance must be >= 1");
  if (min_count < 1 || min_count > max_count || max_count > distance) {
    throw ConfigError("copy task: need 1 <= min_count <= max_count <= distance, got [" +
                      std::to_string(min_count) + ", " + std::to_string(max_count) + "]");
  }
}

TaskSample make_copy_sample(int64_t distance, int count) {
  using namespace copy_tokens;
  TaskSample s;
  auto push = [&s](int input, int target, bool scored) {
    s.input_tokens.push_back(input);
    s.target_tokens.push_back(target);
    s.loss_mask.push_back(scored ? 1 : 0);
  };
  for (int i = 0; i < count; ++i) push(kA, kA, false);
  for (int64_t i = 0; i < distance; ++i) push(kB, kB, false);
  push(kGo, kGo, false);
  for (int i = 0; i < count; ++i) push(kSlot, kA, true);
  push(kSlot, kEnd, true);
  return s;
}

TaskSample gen_copy(const CopyConfig& config, numerics::Rng& rng) {
  config.validate();
  const auto n = static_cast<int>(rng.uniform_int(config.min_count, config.max_count));
  return make_copy_sample(config.distance, n);
}

int copy_count(const TaskSample& sample) {
  int n = 0;
  while (n < static_cast<int>(sample.size()) && sample.input_tokens[n] == copy_tokens::kA) ++n;
  return n;
}

}  // namespace xspan::tasks
