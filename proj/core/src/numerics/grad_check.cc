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

#include "xspan/numerics/grad_check.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "xspan/numerics/tape.h"

namespace xspan::numerics {
namespace {

double evaluate(const ScalarFn& f) {
  NoGradGuard no_grad;
  const Tensor y = f();
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: f is non-finite at a probe point");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> inputs, double eps,
                           const ProbeFilter& filter) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  std::vector<bool> previous_flags;
  for (Tensor& t : inputs) {
    previous_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = f();
    if (!std::isfinite(y.item())) throw NumericError("grad_check: f is non-finite");
    tape.backward(y);
  }
  for (Tensor& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
  }

  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto values = inputs[ti].mutable_data();
    for (int64_t j = 0; j < static_cast<int64_t>(values.size()); ++j) {
      if (filter && !filter(ti, j)) {
        ++report.skipped;
        continue;
      }
      const double saved = values[j];
      values[j] = saved + eps;
      const double plus = evaluate(f);
      values[j] = saved - eps;
      const double minus = evaluate(f);
      values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[ti][static_cast<std::size_t>(j)];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++report.checked;
      if (err > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_tensor = ti;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    inputs[ti].zero_grad();
    inputs[ti].set_requires_grad(previous_flags[ti]);
  }
  return report;
}

double grad_check(const ScalarFn& f, Tensor& x, double eps) {
  return grad_check(f, std::span<Tensor>(&x, 1), eps).max_rel_error;
}

}  // namespace xspan::numerics
