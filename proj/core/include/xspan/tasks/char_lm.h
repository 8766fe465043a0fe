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

#ifndef XSPAN_TASKS_CHAR_LM_H_
#define XSPAN_TASKS_CHAR_LM_H_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xspan/tasks/task_sample.h"

namespace xspan::tasks {

enum class Split { kTrain, kValid, kTest };

// Byte-level corpus. The vocabulary is the sorted set of bytes present.
class CharCorpus {
 public:
  // Throws std::invalid_argument for empty text.
  static CharCorpus from_bytes(std::string_view text);
  // Throws std::runtime_error if unreadable, std::invalid_argument if empty.
  static CharCorpus load(const std::string& path);

  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<uint8_t>& vocab() const { return vocab_; }
  const std::vector<int>& ids() const { return ids_; }
  int id_of(uint8_t byte) const { return index_[byte]; }

  // Contiguous 90/5/5 split as [begin, end) token offsets.
  std::pair<int64_t, int64_t> range(Split split) const;

 private:
  std::vector<uint8_t> vocab_;
  std::array<int, 256> index_{};
  std::vector<int> ids_;
};

// Block of ids[begin, begin + length) inside [range_begin, range_end); the
// target is the next token, and a position whose next token falls outside
// the range is not scored.
TaskSample char_lm_block(const std::vector<int>& ids, int64_t begin, int64_t length,
                         int64_t range_end);

// Contiguous non-overlapping blocks of `block` tokens covering a split (the
// last block may be shorter).
std::vector<TaskSample> char_lm_stream(const CharCorpus& corpus, Split split, int64_t block);

}  // namespace xspan::tasks

#endif  // XSPAN_TASKS_CHAR_LM_H_
