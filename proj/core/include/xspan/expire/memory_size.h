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

#ifndef XSPAN_EXPIRE_MEMORY_SIZE_H_
#define XSPAN_EXPIRE_MEMORY_SIZE_H_

#include <cstdint>
#include <span>

namespace xspan::expire {

// Average memory size (1/T) sum_t |C_t| by explicit counting, where memory
// i (born at time i, span spans[i]) is in C_t iff i < t and m_ti > 0, for
// queries t = 0 .. T-1. Requires T >= spans.size().
double memory_size_oracle(std::span<const double> spans, double ramp, int64_t horizon);

// Number of queries t > i that see memory i, ignoring the sequence end:
// the count of distances d >= 1 with m > 0.
int64_t live_steps(double span, double ramp);

// Closed form (1/T) sum_i (R - 1 + floor(e_i)). With T == spans.size() this
// is R - 1 + mean(floor(e_i)).
double memory_size_closed_form(std::span<const double> spans, double ramp, int64_t horizon);

// Slack allowed between the two: 2 (L + R) / T + 1.
double memory_size_slack(double max_span, double ramp, int64_t horizon);

}  // namespace xspan::expire

#endif  // XSPAN_EXPIRE_MEMORY_SIZE_H_
