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

#include "xspan/numerics/tape.h"

#include <algorithm>
#include <utility>

namespace xspan::numerics {
namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;

}  // namespace

void Tape::record(const char* op_name, std::vector<NodePtr> inputs, NodePtr output,
                  std::function<void()> backward) {
  output->is_leaf = false;
  records_.push_back(Record{op_name, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward() requires a scalar loss, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  for (Record& r : records_) {
    if (!r.output->grad.empty()) std::fill(r.output->grad.begin(), r.output->grad.end(), 0.0);
  }
  const NodePtr& root = loss.node();
  if (!root->requires_grad) return;
  root->ensure_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

Tape* Tape::active() { return g_grad_enabled ? g_active_tape : nullptr; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace xspan::numerics
