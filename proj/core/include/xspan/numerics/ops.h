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

#ifndef XSPAN_NUMERICS_OPS_H_
#define XSPAN_NUMERICS_OPS_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xspan/numerics/rng.h"
#include "xspan/numerics/tape.h"
#include "xspan/numerics/tensor.h"

// Differentiable operations on Tensor.
//
// Every op computes its value eagerly and, when a tape is active and some
// input requires a gradient, records a backward rule on that tape. There is
// no implicit broadcasting: the only broadcast is add_row_vector over the
// leading axis.
namespace xspan::numerics {

// A softmax row in which every entry is masked out.
class DegenerateRowError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Receives the output node (value and gradient) when the tape runs.
using BackwardFn = std::function<void(const detail::Node& out)>;

// Creates the output of a custom op and records `backward` if needed.
// Inside `backward`, use accumulate() to add into input gradients.
Tensor record_op(const char* name, Shape shape, std::vector<double> values,
                 const std::vector<Tensor>& inputs, BackwardFn backward);

// Gradient buffer of `t` if it takes part in differentiation, else nullptr.
double* grad_target(const Tensor& t);

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor scale(const Tensor& x, double c);
// x [N x d] + v [d], broadcast over rows.
Tensor add_row_vector(const Tensor& x, const Tensor& v);

Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
// max(0, min(1, x)); gradient is 1 strictly inside (0, 1) and 0 elsewhere,
// including at the kinks.
Tensor clamp01ramp(const Tensor& x);

// --- reductions and shape --------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, int64_t start, int64_t length);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, int64_t start, int64_t length);

// One row of a rank-2 source (gather_rows) or one element of any source
// (gather_elements, flat index).
struct RowRef {
  Tensor source;
  int64_t row = 0;
};

Tensor gather_rows(std::span<const RowRef> rows);
Tensor gather_elements(std::span<const RowRef> elements);
// v [M] -> [rows x M] with every row equal to v.
Tensor repeat_rows(const Tensor& v, int64_t rows);
// out[k] = table.flat[index[k]]; backward scatter-adds into the table.
Tensor gather_table(const Tensor& table, std::span<const int64_t> index, Shape out_shape);

// --- linear algebra --------------------------------------------------------

// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// --- normalization and probabilities ----------------------------------------

Tensor softmax(const Tensor& x, int64_t axis);

// Row-wise softmax restricted and reweighted by a non-negative mask:
//   p_tj = m_tj exp(s_tj) / sum_k m_tk exp(s_tk)
// Entries with m == 0 are exactly 0 and never touch the arithmetic, so the
// result does not depend on how many zero-mask columns are present.
// Throws DegenerateRowError when a row has no positive mask entry.
Tensor masked_softmax(const Tensor& scores, const Tensor& mask);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// table [V x d], ids in [0, V) -> [n x d].
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Mean negative log-likelihood over rows whose mask is set. Returns 0 when
// no row is scored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const uint8_t> mask);

// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

namespace testing_hooks {
// Multiplies the clamp01ramp backward by `factor`. Used by the selftest
// fault-injection fixture only; 1.0 is the correct value.
void set_ramp_gradient_factor(double factor);
double ramp_gradient_factor();
}  // namespace testing_hooks

}  // namespace xspan::numerics

#endif  // XSPAN_NUMERICS_OPS_H_
