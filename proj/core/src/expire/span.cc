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

#include "xspan/expire/span.h"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <string>

#include "xspan/errors.h"
#include "xspan/numerics/ops.h"

namespace xspan::expire {

using numerics::DegenerateRowError;
using numerics::DimensionError;
using numerics::Shape;
using numerics::Tensor;

SpanPredictor SpanPredictor::create(int64_t dim, int64_t max_span, int64_t ramp,
                                    bool scaled_variant) {
  SpanPredictor p;
  p.weight = Tensor(Shape{dim}, 0.0);
  p.bias = Tensor(Shape{1}, 0.0);
  p.max_span = max_span;
  p.ramp = ramp;
  p.scaled_variant = scaled_variant;
  p.validate();
  return p;
}

void SpanPredictor::validate() const {
  if (!(ramp > 0 && ramp <= max_span)) {
    throw ConfigError("span predictor requires 0 < R <= L, got R=" + std::to_string(ramp) +
                      " L=" + std::to_string(max_span));
  }
  if (!weight.defined() || weight.rank() != 1) throw ConfigError("span predictor weight must be [d]");
  if (!bias.defined() || bias.numel() != 1) throw ConfigError("span predictor bias must be [1]");
}

Tensor predict_span(const SpanPredictor& predictor, const Tensor& hidden) {
  const int64_t d = predictor.weight.dim(0);
  const bool single = hidden.rank() == 1;
  if ((single && hidden.dim(0) != d) || (!single && (hidden.rank() != 2 || hidden.dim(1) != d))) {
    throw DimensionError("predict_span: hidden " + numerics::shape_string(hidden.shape()) +
                         " does not match predictor width " + std::to_string(d));
  }
  const Tensor h = single ? numerics::reshape(hidden, Shape{1, d}) : hidden;
  const int64_t n = h.dim(0);
  Tensor logit = numerics::matmul(h, numerics::reshape(predictor.weight, Shape{d, 1}));
  logit = numerics::reshape(numerics::add_row_vector(logit, predictor.bias), Shape{n});
  if (predictor.scaled_variant) {
    logit = numerics::scale(logit, 1.0 / static_cast<double>(predictor.ramp));
  }
  Tensor span =
      numerics::scale(numerics::sigmoid(logit), static_cast<double>(predictor.max_span));
  return single ? numerics::reshape(span, Shape{}) : span;
}

double remaining_span(double span, int64_t birth, int64_t query_time) {
  if (query_time < birth) {
    throw std::invalid_argument("remaining_span: query time " + std::to_string(query_time) +
                                " precedes birth time " + std::to_string(birth));
  }
  return span - static_cast<double>(query_time - birth);
}

double soft_mask(double remaining, double ramp) {
  return std::max(0.0, std::min(1.0, 1.0 + remaining / ramp));
}

Tensor soft_mask(const Tensor& remaining, double ramp) {
  if (!(ramp > 0.0)) throw ConfigError("soft_mask: ramp must be positive");
  std::vector<double> x(remaining.data().begin(), remaining.data().end());
  for (double& v : x) v = 1.0 + v / ramp;
  const Tensor arg = numerics::record_op(
      "ramp_shift", remaining.shape(), std::move(x), {remaining},
      [remaining, ramp](const numerics::detail::Node& o) {
        if (double* g = numerics::grad_target(remaining)) {
          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / ramp;
        }
      });
  return numerics::clamp01ramp(arg);
}

Tensor ramp_argument_grid(const Tensor& spans, std::span<const double> distance, int64_t rows,
                          double ramp) {
  if (spans.rank() != 1) throw DimensionError("ramp_argument_grid: spans must be [M]");
  const int64_t cols = spans.dim(0);
  if (static_cast<int64_t>(distance.size()) != rows * cols) {
    throw DimensionError("ramp_argument_grid: distance grid size mismatch");
  }
  const auto e = spans.data();
  std::vector<double> x(distance.size());
  for (int64_t t = 0; t < rows; ++t) {
    for (int64_t j = 0; j < cols; ++j) {
      x[t * cols + j] = ramp_argument(e[j], distance[t * cols + j], ramp);
    }
  }
  return numerics::record_op("ramp_argument_grid", Shape{rows, cols}, std::move(x), {spans},
                             [spans, rows, cols, ramp](const numerics::detail::Node& o) {
                               double* g = numerics::grad_target(spans);
                               if (!g) return;
                               for (int64_t t = 0; t < rows; ++t) {
                                 for (int64_t j = 0; j < cols; ++j) {
                                   g[j] += o.grad[t * cols + j] / ramp;
                                 }
                               }
                             });
}

Tensor renormalize_attention(const Tensor& attention, const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("renormalize_attention: mask must be [T x M]");
  const int64_t rows = mask.dim(0);
  const int64_t cols = mask.dim(1);
  int64_t heads = 1;
  if (attention.rank() == 3) {
    heads = attention.dim(0);
    if (attention.dim(1) != rows || attention.dim(2) != cols) {
      throw DimensionError("renormalize_attention: attention/mask shape mismatch");
    }
  } else if (attention.shape() != mask.shape()) {
    throw DimensionError("renormalize_attention: attention/mask shape mismatch");
  }
  const auto a = attention.data();
  const auto m = mask.data();
  std::vector<double> out(a.size(), 0.0);
  auto totals = std::make_shared<std::vector<double>>(static_cast<std::size_t>(heads * rows));
  for (int64_t h = 0; h < heads; ++h) {
    for (int64_t t = 0; t < rows; ++t) {
      const int64_t base = (h * rows + t) * cols;
      double s = 0.0;
      for (int64_t j = 0; j < cols; ++j) s += m[t * cols + j] * a[base + j];
      if (!(s > 0.0)) {
        throw DegenerateRowError("renormalize_attention: every memory of query row " +
                                 std::to_string(t) + " is expired");
      }
      (*totals)[h * rows + t] = s;
      for (int64_t j = 0; j < cols; ++j) out[base + j] = m[t * cols + j] * a[base + j] / s;
    }
  }
  return numerics::record_op(
      "renormalize_attention", attention.shape(), std::move(out), {attention, mask},
      [attention, mask, heads, rows, cols, totals](const numerics::detail::Node& o) {
        double* ga = numerics::grad_target(attention);
        double* gm = numerics::grad_target(mask);
        const auto a = attention.data();
        const auto m = mask.data();
        for (int64_t h = 0; h < heads; ++h) {
          for (int64_t t = 0; t < rows; ++t) {
            const int64_t base = (h * rows + t) * cols;
            const double s = (*totals)[h * rows + t];
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += o.grad[base + j] * o.data[base + j];
            for (int64_t j = 0; j < cols; ++j) {
              const double centered = o.grad[base + j] - dot;
              if (ga) ga[base + j] += m[t * cols + j] / s * centered;
              if (gm) gm[t * cols + j] += a[base + j] / s * centered;
            }
          }
        }
      });
}

Tensor aux_span_loss(const Tensor& spans_in_ramp, double alpha, int64_t block_tokens) {
  if (alpha < 0.0) throw ConfigError("span loss coefficient alpha must be >= 0");
  if (block_tokens <= 0) throw ConfigError("span loss needs a positive token count");
  return numerics::scale(numerics::sum(spans_in_ramp),
                         alpha / static_cast<double>(block_tokens));
}

void write_span_trace_csv(std::ostream& out, std::span<const SpanTraceRow> rows) {
  out << "layer,position,token,span\n";
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (const SpanTraceRow& r : rows) {
    out << r.layer << ',' << r.position << ',' << r.token << ',' << r.span << '\n';
  }
  out.precision(old_precision);
}

}  // namespace xspan::expire
