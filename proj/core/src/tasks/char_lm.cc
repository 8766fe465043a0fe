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

#include "xspan/tasks/char_lm.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace xspan::tasks {

CharCorpus CharCorpus::from_bytes(std::string_view text) {
  if (text.empty()) throw std::invalid_argument("char corpus: empty text");
  CharCorpus c;
  std::array<bool, 256> present{};
  for (char ch : text) present[static_cast<uint8_t>(ch)] = true;
  c.index_.fill(-1);
  for (int b = 0; b < 256; ++b) {
    if (present[b]) {
      c.index_[b] = static_cast<int>(c.vocab_.size());
      c.vocab_.push_back(static_cast<uint8_t>(b));
    }
  }
  c.ids_.reserve(text.size());
  for (char ch : text) c.ids_.push_back(c.index_[static_cast<uint8_t>(ch)]);
  return c;
}

CharCorpus CharCorpus::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("char corpus: cannot read " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw std::invalid_argument("char corpus: empty file " + path);
  return from_bytes(text);
}

std::pair<int64_t, int64_t> CharCorpus::range(Split split) const {
  const auto n = static_cast<int64_t>(ids_.size());
  const int64_t train_end = n * 90 / 100;
  const int64_t valid_end = n * 95 / 100;
  switch (split) {
    case Split::kTrain:
      return {0, train_end};
    case Split::kValid:
      return {train_end, valid_end};
    case Split::kTest:
      return {valid_end, n};
  }
  return {0, 0};
}

TaskSample char_lm_block(const std::vector<int>& ids, int64_t begin, int64_t length,
                         int64_t range_end) {
  if (begin < 0 || length < 1 || begin + length > range_end ||
      range_end > static_cast<int64_t>(ids.size())) {
    throw std::out_of_range("char_lm_block: block outside the corpus range");
  }
  TaskSample s;
  for (int64_t i = begin; i < begin + length; ++i) {
    s.input_tokens.push_back(ids[i]);
    const bool has_next = i + 1 < range_end;
    s.target_tokens.push_back(has_next ? ids[i + 1] : 0);
    s.loss_mask.push_back(has_next ? 1 : 0);
  }
  return s;
}

std::vector<TaskSample> char_lm_stream(const CharCorpus& corpus, Split split, int64_t block) {
  if (block < 1) throw std::invalid_argument("char_lm_stream: block must be positive");
  const auto [begin, end] = corpus.range(split);
  std::vector<TaskSample> out;
  for (int64_t s = begin; s < end; s += block) {
    out.push_back(char_lm_block(corpus.ids(), s, std::min(block, end - s), end));
  }
  return out;
}

}  // namespace xspan::tasks
