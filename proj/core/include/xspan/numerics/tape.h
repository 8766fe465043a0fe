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

#ifndef XSPAN_NUMERICS_TAPE_H_
#define XSPAN_NUMERICS_TAPE_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "xspan/numerics/tensor.h"

namespace xspan::numerics {

// Ordered record of differentiable operations.
//
// Ops append themselves to the thread's active tape (see TapeScope) when any
// input requires a gradient. backward() walks the records once, in reverse
// order. Inputs of a record were always produced before it, so reverse
// record order is a valid reverse topological order.
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::Node>;

  struct Record {
    const char* op_name;
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op_name, std::vector<NodePtr> inputs, NodePtr output,
              std::function<void()> backward);

  // Accumulates dLoss/dX into every reachable tensor that requires a
  // gradient. Intermediate gradients are reset first, so calling twice adds
  // the leaf gradients twice.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

  // Tape that ops record onto on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Record> records_;
};

// Installs a tape as the active one for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace xspan::numerics

#endif  // XSPAN_NUMERICS_TAPE_H_
