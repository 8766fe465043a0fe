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

#ifndef XSPAN_METRICS_METRICS_H_
#define XSPAN_METRICS_METRICS_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "xspan/model/decoder.h"

namespace xspan::metrics {

// nats / ln 2.
double bits_per_byte(double nats_per_token);

struct RunMetrics {
  int64_t step = 0;
  double task_loss = 0.0;  // nats per scored token
  double span_loss = 0.0;
  double bpb = std::numeric_limits<double>::quiet_NaN();  // LM runs only
  double metric = 0.0;     // accuracy, error rate or bpb, depending on the task
  double avg_mem = 0.0;    // mean |C_t|, entries
  double peak_mem = 0.0;   // largest bank, entries
  double ms_per_batch = 0.0;
  double avg_span = std::numeric_limits<double>::quiet_NaN();  // timesteps
  double lr = 0.0;
};

const std::vector<std::string>& csv_columns();
void write_csv_header(std::ostream& out);
// Empty cell for NaN fields.
void write_csv_row(std::ostream& out, const RunMetrics& m);

struct MemoryStats {
  double avg_mem = 0.0;
  int64_t peak_mem = 0;
  double avg_span = std::numeric_limits<double>::quiet_NaN();
};

// Snapshot of the live banks: mean and max size over layers, mean stored span.
MemoryStats memory_stats(const model::StreamState& state);

// Accumulates per-block statistics over a window of blocks.
class MemoryTracker {
 public:
  void add(const model::BlockStats& stats);
  MemoryStats stats() const;
  int64_t blocks() const { return blocks_; }
  void reset() { *this = MemoryTracker(); }

 private:
  double resident_sum_ = 0.0;
  int64_t resident_count_ = 0;
  int64_t peak_ = 0;
  double span_sum_ = 0.0;
  int64_t span_count_ = 0;
  int64_t blocks_ = 0;
};

struct Timing {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double variance_ms2 = 0.0;
  std::vector<double> samples_ms;
};

double median(std::vector<double> values);
Timing summarize_timings(std::vector<double> samples_ms);
// Runs `thunk` `repeats` times on a monotonic clock.
Timing timed_batch(const std::function<void()>& thunk, int repeats = 5);

}  // namespace xspan::metrics

#endif  // XSPAN_METRICS_METRICS_H_
