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

#ifndef XSPAN_TRAIN_TRAINER_H_
#define XSPAN_TRAIN_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xspan/metrics/metrics.h"
#include "xspan/model/decoder.h"
#include "xspan/numerics/ops.h"
#include "xspan/tasks/streams.h"
#include "xspan/train/optimizer.h"

namespace xspan::train {

struct TrainConfig {
  double alpha = 1e-6;  // span loss coefficient
  double learning_rate = 3e-3;
  int64_t warmup_steps = 100;
  int64_t total_steps = 1000;
  double clip_norm = 1.0;
  int batch_size = 1;
  uint64_t seed = 0;
  bool random_shorten = false;
  int64_t eval_interval = 100;
  AdamConfig adam;
  // Steps whose wall time feeds the median in ms_per_batch.
  int timing_window = 5;

  // Throws ConfigError on a violated invariant.
  void validate() const;
};

// Training was stopped by a non-finite loss. `dump` holds a JSON diagnostic
// of the last block (spans and masks per layer).
class NumericHalt : public numerics::NumericError {
 public:
  NumericHalt(const std::string& what, std::string dump)
      : numerics::NumericError(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

// task + span; throws numerics::NumericError if either is non-finite.
numerics::Tensor total_loss(const numerics::Tensor& task_loss, const numerics::Tensor& span_loss);

// l ~ U(0, L).
double sample_shorten(int64_t max_span, numerics::Rng& rng);

// Losses of one segment processed block by block.
struct SegmentOutput {
  numerics::Tensor task_loss;  // mean over scored positions (0 if none)
  numerics::Tensor span_loss;  // mean over blocks
  int64_t scored = 0;
  int64_t blocks = 0;
  metrics::MemoryTracker memory;
  model::BlockResult last_block;
};

SegmentOutput run_segment(model::Model& model, model::StreamState& state,
                          const tasks::TaskSample& sample, const model::BlockOptions& options);

struct StepOutcome {
  int64_t step = 0;  // 1-based index of the update just taken
  double task_loss = 0.0;
  double span_loss = 0.0;
  double lr = 0.0;
  double ms = 0.0;
  std::optional<double> shorten_length;
  StepReport optimizer;
  metrics::MemoryStats memory;
};

class Trainer {
 public:
  Trainer(model::Model& model, const tasks::TaskStream& task, TrainConfig config);

  // One optimizer update over batch_size streams. Throws NumericHalt.
  StepOutcome step();

  int64_t step_count() const { return optim_.step + optim_.skipped_steps; }
  const TrainConfig& config() const { return config_; }
  OptimState& optim_state() { return optim_; }
  const OptimState& optim_state() const { return optim_; }
  std::vector<numerics::Tensor>& params() { return params_; }
  const std::vector<model::StreamState>& streams() const { return streams_; }

 private:
  std::string diagnostic_dump(const model::BlockResult& block) const;

  model::Model& model_;
  const tasks::TaskStream& task_;
  TrainConfig config_;
  std::vector<numerics::Tensor> params_;
  OptimState optim_;
  std::vector<model::StreamState> streams_;
};

struct EvalOptions {
  std::optional<double> max_span_override;
  bool prune = true;
  int64_t max_segments = -1;  // all
};

struct EvalResult {
  double task_loss = 0.0;  // nats per scored token
  double accuracy = 0.0;   // exact-sample or per-token, by score kind
  double bpb = 0.0;
  // accuracy for kSequenceExact, error rate for kTokenAccuracy, bpb for LM.
  double metric = 0.0;
  int64_t scored_tokens = 0;
  int64_t scored_units = 0;  // samples or tokens behind `accuracy`
  int64_t segments = 0;
  metrics::MemoryStats memory;
};

EvalResult evaluate(model::Model& model, const tasks::TaskStream& task,
                    const EvalOptions& options = {});

struct LoopHooks {
  // Called with every metrics row (each eval_interval and at the end).
  std::function<void(const metrics::RunMetrics&)> on_metrics;
  // Called after the metrics row of an eval step, e.g. for checkpoints.
  std::function<void(int64_t step)> on_eval_step;
};

// Runs the trainer up to total_steps, emitting a metrics row every
// eval_interval steps.
std::vector<metrics::RunMetrics> train_loop(Trainer& trainer, model::Model& model,
                                            const tasks::TaskStream& task,
                                            const LoopHooks& hooks = {});

}  // namespace xspan::train

#endif  // XSPAN_TRAIN_TRAINER_H_
