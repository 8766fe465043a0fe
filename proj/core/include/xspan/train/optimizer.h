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

#ifndef XSPAN_TRAIN_OPTIMIZER_H_
#define XSPAN_TRAIN_OPTIMIZER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "xspan/numerics/tensor.h"

namespace xspan::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  int64_t step = 0;           // updates applied
  int64_t skipped_steps = 0;  // updates refused for non-finite gradients
};

struct StepReport {
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
  bool skipped = false;
};

OptimState make_optim_state(std::span<const numerics::Tensor> params);

// L2 norm over every gradient jointly; missing gradients count as zero.
double global_grad_norm(std::span<const numerics::Tensor> params);

// Clips the joint gradient to clip_norm, then applies one bias-corrected
// Adam update. A non-finite gradient skips the update and is counted.
StepReport adam_step(std::span<numerics::Tensor> params, OptimState& state, double lr,
                     double clip_norm, const AdamConfig& adam = {});

// Linear warmup from 0 to `lr` over `warmup` steps, then cosine decay to 0
// at `total`.
double lr_at_step(int64_t step, double lr, int64_t warmup, int64_t total);

}  // namespace xspan::train

#endif  // XSPAN_TRAIN_OPTIMIZER_H_
