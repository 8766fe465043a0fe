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

#ifndef XSPAN_EXPIRE_MEMORY_BANK_H_
#define XSPAN_EXPIRE_MEMORY_BANK_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xspan/numerics/ops.h"

namespace xspan::expire {

// One cached timestep of one layer.
//
// The row references point into the block tensors that produced them, so
// while the producing graph is alive, gradients flow back through the cache.
struct MemoryEntry {
  numerics::RowRef hidden;  // normalized layer input h_i, [d]
  numerics::RowRef key;     // all heads, [d]
  numerics::RowRef value;   // all heads, [d]
  int64_t birth_time = 0;
  // Element of a span vector; undefined source in fixed-span mode.
  numerics::RowRef span;

  bool has_span() const { return span.source.defined(); }
  double span_value() const;
};

// Live memories of one layer, ordered by birth time.
class MemoryBank {
 public:
  explicit MemoryBank(int layer = 0) : layer_(layer) {}

  int layer() const { return layer_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  int64_t deleted_count() const { return deleted_; }

  // Throws std::invalid_argument unless birth times stay strictly increasing.
  void append(MemoryEntry entry);

  // Removes every entry for which `expired(entry)` holds; returns how many.
  template <typename Pred>
  std::size_t remove_if(Pred expired) {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!expired(entries_[i])) {
        if (kept != i) entries_[kept] = std::move(entries_[i]);
        ++kept;
      }
    }
    const std::size_t removed = entries_.size() - kept;
    entries_.resize(kept);
    deleted_ += static_cast<int64_t>(removed);
    return removed;
  }

  // Replaces every row reference by a gradient-free copy. Values are kept
  // bit for bit; rows that shared a source keep sharing the copy.
  void detach();

  void clear();

 private:
  int layer_;
  std::vector<MemoryEntry> entries_;
  int64_t deleted_ = 0;
};

// Deletes the memories whose mask is exactly 0 at `block_start`, i.e.
// ramp_argument(e_i, block_start - i, R) <= 0. Since the mask only falls
// with time, nothing deleted here could be attended by any query of the
// block. Returns the number deleted.
std::size_t prune(MemoryBank& bank, int64_t block_start, double ramp);

// Fixed-span rule: deletes memories older than `span` steps at block start.
std::size_t prune_fixed(MemoryBank& bank, int64_t block_start, int64_t span);

// Deletes memories whose distance at block start exceeds `max_distance`.
// Used when span pruning is disabled, to bound the bank by L + R.
std::size_t evict_beyond(MemoryBank& bank, int64_t block_start, int64_t max_distance);

}  // namespace xspan::expire

#endif  // XSPAN_EXPIRE_MEMORY_BANK_H_
