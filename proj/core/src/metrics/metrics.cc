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

#include "xspan/metrics/metrics.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace xspan::metrics {

double bits_per_byte(double nats_per_token) { return nats_per_token / std::numbers::ln2; }

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns = {
      "step",     "task_loss", "span_loss",    "bpb",      "metric",
      "avg_mem",  "peak_mem",  "ms_per_batch", "avg_span", "lr"};
  return columns;
}

void write_csv_header(std::ostream& out) {
  const auto& cols = csv_columns();
  for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

void write_csv_row(std::ostream& out, const RunMetrics& m) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  auto cell = [&out](double v) {
    out << ',';
    if (!std::isnan(v)) out << v;
  };
  out << m.step;
  cell(m.task_loss);
  cell(m.span_loss);
  cell(m.bpb);
  cell(m.metric);
  cell(m.avg_mem);
  cell(m.peak_mem);
  cell(m.ms_per_batch);
  cell(m.avg_span);
  cell(m.lr);
  out << '\n';
  out.precision(old);
}

MemoryStats memory_stats(const model::StreamState& state) {
  MemoryStats s;
  if (state.banks.empty()) return s;
  double total = 0.0;
  double span_sum = 0.0;
  int64_t span_count = 0;
  for (const expire::MemoryBank& bank : state.banks) {
    const auto size = static_cast<int64_t>(bank.size());
    total += static_cast<double>(size);
    s.peak_mem = std::max(s.peak_mem, size);
    for (const expire::MemoryEntry& e : bank.entries()) {
      if (e.has_span()) {
        span_sum += e.span_value();
        ++span_count;
      }
    }
  }
  s.avg_mem = total / static_cast<double>(state.banks.size());
  if (span_count > 0) s.avg_span = span_sum / static_cast<double>(span_count);
  return s;
}

void MemoryTracker::add(const model::BlockStats& stats) {
  resident_sum_ += stats.resident_sum;
  resident_count_ += stats.resident_count;
  peak_ = std::max(peak_, stats.peak);
  span_sum_ += stats.span_sum;
  span_count_ += stats.span_count;
  ++blocks_;
}

MemoryStats MemoryTracker::stats() const {
  MemoryStats s;
  if (resident_count_ > 0) s.avg_mem = resident_sum_ / static_cast<double>(resident_count_);
  s.peak_mem = peak_;
  if (span_count_ > 0) s.avg_span = span_sum_ / static_cast<double>(span_count_);
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Timing summarize_timings(std::vector<double> samples_ms) {
  Timing t;
  if (samples_ms.empty()) return t;
  t.median_ms = median(samples_ms);
  double sum = 0.0;
  for (double v : samples_ms) sum += v;
  t.mean_ms = sum / static_cast<double>(samples_ms.size());
  double sq = 0.0;
  for (double v : samples_ms) sq += (v - t.mean_ms) * (v - t.mean_ms);
  t.variance_ms2 = samples_ms.size() > 1 ? sq / static_cast<double>(samples_ms.size() - 1) : 0.0;
  t.samples_ms = std::move(samples_ms);
  return t;
}

Timing timed_batch(const std::function<void()>& thunk, int repeats) {
  if (repeats < 1) throw std::invalid_argument("timed_batch: repeats must be >= 1");
  std::vector<double> samples;
  samples.reserve(static_cast<size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    thunk();
    const auto stop = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return summarize_timings(std::move(samples));
}

}  // namespace xspan::metrics
