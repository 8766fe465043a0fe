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

#ifndef XSPAN_NUMERICS_GRAD_CHECK_H_
#define XSPAN_NUMERICS_GRAD_CHECK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xspan/numerics/tensor.h"

namespace xspan::numerics {

// Scalar-valued function of the current contents of some tensors.
using ScalarFn = std::function<Tensor()>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;  // coordinates excluded by the caller's filter
  std::size_t worst_tensor = 0;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Decides whether coordinate `index` of input `tensor` may be probed.
using ProbeFilter = std::function<bool(std::size_t tensor, int64_t index)>;

// Compares the tape gradient of f with central differences
//   (f(x + eps e_j) - f(x - eps e_j)) / (2 eps)
// for every coordinate of every tensor in `inputs`. The error of one
// coordinate is |analytic - numeric| / max(1, |numeric|); the report holds
// the maximum. Inputs are modified in place during probing and restored.
// Throws NumericError if f is non-finite at a probe point.
GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> inputs, double eps = 1e-5,
                           const ProbeFilter& filter = nullptr);

// Single-input convenience form; returns the max relative error.
double grad_check(const ScalarFn& f, Tensor& x, double eps = 1e-5);

}  // namespace xspan::numerics

#endif  // XSPAN_NUMERICS_GRAD_CHECK_H_
