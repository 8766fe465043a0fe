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

#ifndef XSPAN_TASKS_STREAMS_H_
#define XSPAN_TASKS_STREAMS_H_

#include <cstdint>
#include <memory>
#include <string>

#include "xspan/tasks/char_lm.h"
#include "xspan/tasks/collision.h"
#include "xspan/tasks/copy_task.h"
#include "xspan/tasks/task_sample.h"

// Deterministic sample streams consumed by the trainer. Every segment is a
// pure function of (seed, stream, step) or (seed, eval index).
namespace xspan::tasks {

enum class ScoreKind {
  kSequenceExact,  // a sample counts as correct iff every scored token is
  kTokenAccuracy,  // every scored token counts
  kBitsPerByte,
};

struct Segment {
  TaskSample sample;
  // Start from empty memory banks before this segment.
  bool reset_memory = false;
};

class TaskStream {
 public:
  virtual ~TaskStream() = default;
  virtual std::string name() const = 0;
  virtual int vocab_size() const = 0;
  virtual ScoreKind score_kind() const = 0;
  virtual Segment train_segment(int64_t step, int stream) const = 0;
  virtual int64_t eval_segment_count() const = 0;
  virtual Segment eval_segment(int64_t index) const = 0;
};

// Copy samples back to back in one continuous stream.
class CopyStream : public TaskStream {
 public:
  CopyStream(CopyConfig config, uint64_t seed, int64_t eval_samples);
  std::string name() const override { return "copy"; }
  int vocab_size() const override { return copy_tokens::kVocabSize; }
  ScoreKind score_kind() const override { return ScoreKind::kSequenceExact; }
  Segment train_segment(int64_t step, int stream) const override;
  int64_t eval_segment_count() const override { return eval_samples_; }
  Segment eval_segment(int64_t index) const override;

 private:
  CopyConfig config_;
  uint64_t seed_;
  int64_t eval_samples_;
};

// One episode per segment, each on fresh memory.
class CollisionStream : public TaskStream {
 public:
  CollisionStream(CollisionConfig config, uint64_t seed, int64_t eval_episodes);
  std::string name() const override {
    return config_.easy_mode ? "collision_easy" : "collision";
  }
  int vocab_size() const override { return CollisionVocab(config_).size(); }
  ScoreKind score_kind() const override { return ScoreKind::kTokenAccuracy; }
  Segment train_segment(int64_t step, int stream) const override;
  int64_t eval_segment_count() const override { return eval_episodes_; }
  Segment eval_segment(int64_t index) const override;

 private:
  CollisionConfig config_;
  uint64_t seed_;
  int64_t eval_episodes_;
};

// Contiguous text. Training streams start at evenly spaced offsets of the
// training split and wrap around; evaluation walks the validation split.
class CharLmStream : public TaskStream {
 public:
  CharLmStream(std::shared_ptr<const CharCorpus> corpus, int64_t segment_length, int streams,
               Split eval_split = Split::kValid);
  std::string name() const override { return "char_lm"; }
  int vocab_size() const override { return corpus_->vocab_size(); }
  ScoreKind score_kind() const override { return ScoreKind::kBitsPerByte; }
  Segment train_segment(int64_t step, int stream) const override;
  int64_t eval_segment_count() const override;
  Segment eval_segment(int64_t index) const override;

 private:
  std::shared_ptr<const CharCorpus> corpus_;
  int64_t length_;
  int streams_;
  Split eval_split_;
};

}  // namespace xspan::tasks

#endif  // XSPAN_TASKS_STREAMS_H_
