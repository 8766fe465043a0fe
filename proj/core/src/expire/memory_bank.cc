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

#include "xspan/expire/memory_bank.h"

#include <stdexcept>
#include <string>
#include <unordered_map>

#include "xspan/expire/span.h"

namespace xspan::expire {

double MemoryEntry::span_value() const {
  if (!has_span()) throw std::logic_error("memory entry has no span (fixed-span mode)");
  return span.source.data()[static_cast<std::size_t>(span.row)];
}

void MemoryBank::append(MemoryEntry entry) {
  if (!entries_.empty() && entry.birth_time <= entries_.back().birth_time) {
    throw std::invalid_argument("memory bank: birth time " + std::to_string(entry.birth_time) +
                                " does not follow " + std::to_string(entries_.back().birth_time));
  }
  entries_.push_back(std::move(entry));
}

void MemoryBank::detach() {
  std::unordered_map<const numerics::detail::Node*, numerics::Tensor> copies;
  auto cut = [&copies](numerics::RowRef& ref) {
    if (!ref.source.defined() || !ref.source.requires_grad()) return;
    auto [it, inserted] = copies.try_emplace(ref.source.node().get());
    if (inserted) it->second = ref.source.detach();
    ref.source = it->second;
  };
  for (MemoryEntry& e : entries_) {
    cut(e.hidden);
    cut(e.key);
    cut(e.value);
    cut(e.span);
  }
}

void MemoryBank::clear() {
  deleted_ += static_cast<int64_t>(entries_.size());
  entries_.clear();
}

std::size_t prune(MemoryBank& bank, int64_t block_start, double ramp) {
  return bank.remove_if([block_start, ramp](const MemoryEntry& e) {
    const auto distance = static_cast<double>(block_start - e.birth_time);
    return ramp_argument(e.span_value(), distance, ramp) <= 0.0;
  });
}

std::size_t prune_fixed(MemoryBank& bank, int64_t block_start, int64_t span) {
  return bank.remove_if(
      [block_start, span](const MemoryEntry& e) { return block_start - e.birth_time > span; });
}

std::size_t evict_beyond(MemoryBank& bank, int64_t block_start, int64_t max_distance) {
  return bank.remove_if([block_start, max_distance](const MemoryEntry& e) {
    return block_start - e.birth_time > max_distance;
  });
}

}  // namespace xspan::expire
