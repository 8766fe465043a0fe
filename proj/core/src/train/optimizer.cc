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

#include "xspan/train/optimizer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace xspan::train {

OptimState make_optim_state(std::span<const numerics::Tensor> params) {
  OptimState s;
  for (const numerics::Tensor& p : params) {
    s.first_moment.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    s.second_moment.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
  return s;
}

double global_grad_norm(std::span<const numerics::Tensor> params) {
  double sq = 0.0;
  for (const numerics::Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

StepReport adam_step(std::span<numerics::Tensor> params, OptimState& state, double lr,
                     double clip_norm, const AdamConfig& adam) {
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match the parameters");
  }
  if (clip_norm <= 0.0) throw std::invalid_argument("adam_step: clip_norm must be positive");
  StepReport report;
  report.grad_norm = global_grad_norm(params);
  if (!std::isfinite(report.grad_norm)) {
    report.skipped = true;
    ++state.skipped_steps;
    return report;
  }
  double factor = 1.0;
  if (report.grad_norm > clip_norm) {
    factor = clip_norm / report.grad_norm;
    report.clipped = true;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.size(); ++k) {
    numerics::Tensor& p = params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (static_cast<int64_t>(m.size()) != p.numel()) {
      throw std::invalid_argument("adam_step: moment shape mismatch");
    }
    const bool has = p.has_grad();
    const auto g = has ? p.grad() : std::span<const double>();
    auto w = p.mutable_data();
    for (size_t i = 0; i < m.size(); ++i) {
      const double gi = has ? g[i] * factor : 0.0;
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * gi;
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + adam.epsilon);
    }
  }
  return report;
}

double lr_at_step(int64_t step, double lr, int64_t warmup, int64_t total) {
  if (step < 0 || step > total) throw std::out_of_range("lr_at_step: step outside [0, total]");
  if (step < warmup) return lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace xspan::train
