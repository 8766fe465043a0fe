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

#include "xspan/expire/memory_size.h"

#include <cmath>
#include <stdexcept>

#include "xspan/expire/span.h"

namespace xspan::expire {

double memory_size_oracle(std::span<const double> spans, double ramp, int64_t horizon) {
  const auto n = static_cast<int64_t>(spans.size());
  if (horizon < n) throw std::invalid_argument("memory_size_oracle: horizon shorter than spans");
  if (horizon <= 0) return 0.0;
  int64_t total = 0;
  for (int64_t t = 0; t < horizon; ++t) {
    for (int64_t i = 0; i < std::min(t, n); ++i) {
      if (soft_mask(remaining_span(spans[i], i, t), ramp) > 0.0) ++total;
    }
  }
  return static_cast<double>(total) / static_cast<double>(horizon);
}

int64_t live_steps(double span, double ramp) {
  int64_t count = 0;
  for (int64_t d = 1; ramp_argument(span, static_cast<double>(d), ramp) > 0.0; ++d) ++count;
  return count;
}

double memory_size_closed_form(std::span<const double> spans, double ramp, int64_t horizon) {
  if (horizon <= 0) throw std::invalid_argument("memory_size_closed_form: horizon must be positive");
  double total = 0.0;
  for (double e : spans) total += ramp - 1.0 + std::floor(e);
  return total / static_cast<double>(horizon);
}

double memory_size_slack(double max_span, double ramp, int64_t horizon) {
  return 2.0 * (max_span + ramp) / static_cast<double>(horizon) + 1.0;
}

}  // namespace xspan::expire
