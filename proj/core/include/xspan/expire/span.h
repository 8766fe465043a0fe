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

#ifndef XSPAN_EXPIRE_SPAN_H_
#define XSPAN_EXPIRE_SPAN_H_

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "xspan/numerics/tensor.h"

// Learned memory expiration: every cached timestep i gets a span e_i in
// (0, L). A query at time t sees memory i through the soft mask
//
//   m_ti = clamp(1 + (e_i - (t - i)) / R, 0, 1)
//
// which is 1 while the memory is fresh, decays linearly over the last R
// steps, and is exactly 0 afterwards. Attention weights are multiplied by
// m and renormalized; memories whose mask is 0 can be deleted for good.
namespace xspan::expire {

// Per-layer span predictor, shared by every attention head of the layer.
struct SpanPredictor {
  numerics::Tensor weight;  // [d]
  numerics::Tensor bias;    // [1]
  int64_t max_span = 0;     // L, timesteps
  int64_t ramp = 0;         // R, timesteps
  // Divide the logit by R before the sigmoid; flattens the response for
  // very large L.
  bool scaled_variant = false;

  // Zero weight and bias, so every initial span is L / 2.
  static SpanPredictor create(int64_t dim, int64_t max_span, int64_t ramp, bool scaled_variant);
  // Throws ConfigError unless 0 < R <= L and the shapes are consistent.
  void validate() const;
};

// e = L * sigmoid(w.h + b), or L * sigmoid((w.h + b) / R) in the scaled
// variant. `hidden` is [d] (result is a scalar) or [n x d] (result is [n]).
numerics::Tensor predict_span(const SpanPredictor& predictor, const numerics::Tensor& hidden);

// r_ti = e_i - (t - i). Throws std::invalid_argument when t < i.
double remaining_span(double span, int64_t birth, int64_t query_time);

// Argument of the ramp clamp, 1 + (e - distance) / R. The mask and the
// pruning rule both go through this expression, so they agree bit for bit.
inline double ramp_argument(double span, double distance, double ramp) {
  return 1.0 + (span - distance) / ramp;
}

// m = max(0, min(1, 1 + r / R)).
double soft_mask(double remaining, double ramp);

// Differentiable soft mask of a tensor of remaining spans.
numerics::Tensor soft_mask(const numerics::Tensor& remaining, double ramp);

// Ramp arguments for a [rows x M] query/memory grid:
//   x_tj = 1 + (spans_j - distance_tj) / R
// Differentiable in `spans` ([M]); `distance` is row-major [rows x M].
numerics::Tensor ramp_argument_grid(const numerics::Tensor& spans,
                                    std::span<const double> distance, int64_t rows, double ramp);

// a'_ti = m_ti a_ti / sum_j m_tj a_tj, with m shared across heads.
// `attention` is [T x M] or [heads x T x M]; `mask` is [T x M].
// Throws numerics::DegenerateRowError for a row whose masked mass is 0.
numerics::Tensor renormalize_attention(const numerics::Tensor& attention,
                                       const numerics::Tensor& mask);

// alpha * sum(spans) / T for the memories that sat inside the ramp during
// the current block. Throws ConfigError for alpha < 0 or T <= 0.
numerics::Tensor aux_span_loss(const numerics::Tensor& spans_in_ramp, double alpha,
                               int64_t block_tokens);

// One exported span: which layer, which timestep, which token, e_i.
struct SpanTraceRow {
  int layer = 0;
  int64_t position = 0;
  int token = 0;
  double span = 0.0;
};

// CSV with header "layer,position,token,span".
void write_span_trace_csv(std::ostream& out, std::span<const SpanTraceRow> rows);

}  // namespace xspan::expire

#endif  // XSPAN_EXPIRE_SPAN_H_
