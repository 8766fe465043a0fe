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

#include "xspan/tasks/streams.h"

#include <algorithm>
#include <stdexcept>

#include "xspan/numerics/rng.h"

namespace xspan::tasks {

namespace {

constexpr uint64_t kEvalSalt = 0x6576616c5f736574ULL;

numerics::Rng train_rng(uint64_t seed, int64_t step, int stream) {
  const uint64_t s = numerics::Rng::derive(seed, static_cast<uint64_t>(stream) + 1);
  return numerics::Rng(numerics::Rng::derive(s, static_cast<uint64_t>(step)));
}

numerics::Rng eval_rng(uint64_t seed, int64_t index) {
  return numerics::Rng(numerics::Rng::derive(seed ^ kEvalSalt, static_cast<uint64_t>(index)));
}

}  // namespace

CopyStream::CopyStream(CopyConfig config, uint64_t seed, int64_t eval_samples)
    : config_(config), seed_(seed), eval_samples_(eval_samples) {
  config_.validate();
  if (eval_samples_ < 1) throw std::invalid_argument("copy stream: eval_samples must be >= 1");
}

Segment CopyStream::train_segment(int64_t step, int stream) const {
  numerics::Rng rng = train_rng(seed_, step, stream);
  return Segment{gen_copy(config_, rng), false};
}

Segment CopyStream::eval_segment(int64_t index) const {
  numerics::Rng rng = eval_rng(seed_, index);
  return Segment{gen_copy(config_, rng), index == 0};
}

CollisionStream::CollisionStream(CollisionConfig config, uint64_t seed, int64_t eval_episodes)
    : config_(config), seed_(seed), eval_episodes_(eval_episodes) {
  config_.validate();
  if (eval_episodes_ < 1) throw std::invalid_argument("collision stream: eval_episodes must be >= 1");
}

Segment CollisionStream::train_segment(int64_t step, int stream) const {
  numerics::Rng rng = train_rng(seed_, step, stream);
  return Segment{gen_collision(config_, rng), true};
}

Segment CollisionStream::eval_segment(int64_t index) const {
  numerics::Rng rng = eval_rng(seed_, index);
  return Segment{gen_collision(config_, rng), true};
}

CharLmStream::CharLmStream(std::shared_ptr<const CharCorpus> corpus, int64_t segment_length,
                           int streams, Split eval_split)
    : corpus_(std::move(corpus)), length_(segment_length), streams_(streams),
      eval_split_(eval_split) {
  if (!corpus_) throw std::invalid_argument("char_lm stream: no corpus");
  if (length_ < 1 || streams_ < 1) {
    throw std::invalid_argument("char_lm stream: segment length and streams must be positive");
  }
  const auto [b, e] = corpus_->range(Split::kTrain);
  if (e - b < length_ + 1) throw std::invalid_argument("char_lm stream: training split too short");
}

Segment CharLmStream::train_segment(int64_t step, int stream) const {
  const auto [begin, end] = corpus_->range(Split::kTrain);
  // Segments per lap of the training split.
  const int64_t lap = std::max<int64_t>(1, (end - begin - 1) / length_);
  const int64_t start_slot = lap * stream / streams_;
  const int64_t slot = (start_slot + step) % lap;
  const int64_t offset = begin + slot * length_;
  const bool wrapped = step > 0 && slot == 0;
  return Segment{char_lm_block(corpus_->ids(), offset, length_, end), wrapped};
}

int64_t CharLmStream::eval_segment_count() const {
  const auto [begin, end] = corpus_->range(eval_split_);
  return (end - begin + length_ - 1) / length_;
}

Segment CharLmStream::eval_segment(int64_t index) const {
  const auto [begin, end] = corpus_->range(eval_split_);
  const int64_t offset = begin + index * length_;
  if (index < 0 || offset >= end) throw std::out_of_range("char_lm stream: eval index");
  return Segment{char_lm_block(corpus_->ids(), offset, std::min(length_, end - offset), end),
                 index == 0};
}

}  // namespace xspan::tasks
