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

#include "xspan/train/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numbers>

#include "json.hpp"
#include "xspan/errors.h"
#include "xspan/numerics/tape.h"

namespace xspan::train {

using numerics::Tensor;

namespace {

constexpr uint64_t kDropoutSalt = 0x64726f706f7574ULL;
constexpr uint64_t kShortenSalt = 0x73686f7274656eULL;

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  require(alpha >= 0.0, "alpha must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(total_steps >= 1, "total_steps must be >= 1");
  require(warmup_steps >= 0 && warmup_steps <= total_steps, "need 0 <= warmup_steps <= total_steps");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  require(timing_window >= 1, "timing_window must be >= 1");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
          "adam betas must be in [0, 1)");
  require(adam.epsilon > 0.0, "adam epsilon must be positive");
}

Tensor total_loss(const Tensor& task_loss, const Tensor& span_loss) {
  if (!task_loss.all_finite() || !span_loss.all_finite()) {
    throw numerics::NumericError("total_loss: non-finite loss (task " +
                                 std::to_string(task_loss.item()) + ", span " +
                                 std::to_string(span_loss.item()) + ")");
  }
  return numerics::add(task_loss, span_loss);
}

double sample_shorten(int64_t max_span, numerics::Rng& rng) {
  return rng.uniform(0.0, static_cast<double>(max_span));
}

SegmentOutput run_segment(model::Model& model, model::StreamState& state,
                          const tasks::TaskSample& sample, const model::BlockOptions& options) {
  SegmentOutput out;
  const auto len = static_cast<int64_t>(sample.size());
  const int64_t k = model.config().block_size;
  Tensor weighted_ce = Tensor::scalar(0.0);
  Tensor span_sum = Tensor::scalar(0.0);
  for (int64_t start = 0; start < len; start += k) {
    const int64_t n = std::min(k, len - start);
    std::span<const int> tokens(sample.input_tokens.data() + start, static_cast<size_t>(n));
    std::span<const int> targets(sample.target_tokens.data() + start, static_cast<size_t>(n));
    std::span<const uint8_t> mask(sample.loss_mask.data() + start, static_cast<size_t>(n));
    model::BlockResult block = model.forward_block(state, tokens, options);
    const auto scored = static_cast<int64_t>(std::count(mask.begin(), mask.end(), uint8_t{1}));
    if (scored > 0) {
      const Tensor ce = numerics::cross_entropy(block.logits, targets, mask);
      weighted_ce = numerics::add(weighted_ce, numerics::scale(ce, static_cast<double>(scored)));
      out.scored += scored;
    }
    span_sum = numerics::add(span_sum, block.span_loss);
    out.memory.add(block.stats);
    ++out.blocks;
    out.last_block = std::move(block);
  }
  out.task_loss = out.scored > 0 ? numerics::scale(weighted_ce, 1.0 / static_cast<double>(out.scored))
                                 : weighted_ce;
  out.span_loss = out.blocks > 0 ? numerics::scale(span_sum, 1.0 / static_cast<double>(out.blocks))
                                 : span_sum;
  return out;
}

Trainer::Trainer(model::Model& model, const tasks::TaskStream& task, TrainConfig config)
    : model_(model), task_(task), config_(config) {
  config_.validate();
  if (task_.vocab_size() > model_.config().vocab_size) {
    throw ConfigError("model vocab_size " + std::to_string(model_.config().vocab_size) +
                      " is smaller than the task vocabulary " +
                      std::to_string(task_.vocab_size()));
  }
  for (const auto& [name, t] : model_.parameters()) params_.push_back(t);
  optim_ = make_optim_state(params_);
  for (int b = 0; b < config_.batch_size; ++b) streams_.push_back(model_.new_stream());
}

StepOutcome Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const int64_t index = step_count();
  StepOutcome out;
  out.step = index + 1;
  out.lr = lr_at_step(std::min(index + 1, config_.total_steps), config_.learning_rate,
                      config_.warmup_steps, config_.total_steps);
  model_.dropout_rng() =
      numerics::Rng(numerics::Rng::derive(config_.seed ^ kDropoutSalt, static_cast<uint64_t>(index)));
  if (config_.random_shorten) {
    numerics::Rng rng(
        numerics::Rng::derive(config_.seed ^ kShortenSalt, static_cast<uint64_t>(index)));
    out.shorten_length = sample_shorten(model_.config().max_span, rng);
  }

  model::BlockOptions options;
  options.training = true;
  options.alpha = config_.alpha;
  options.shorten_length = out.shorten_length;
  options.capture = true;

  for (Tensor& p : params_) p.zero_grad();
  metrics::MemoryTracker memory;
  const double inv_batch = 1.0 / static_cast<double>(config_.batch_size);
  for (int b = 0; b < config_.batch_size; ++b) {
    tasks::Segment seg = task_.train_segment(index, b);
    if (seg.reset_memory) streams_[b] = model_.new_stream();
    numerics::Tape tape;
    numerics::TapeScope scope(tape);
    SegmentOutput run;
    try {
      run = run_segment(model_, streams_[b], seg.sample, options);
    } catch (const numerics::NumericError& e) {
      // The failing block has no result; report the cached spans instead.
      model::BlockResult cached;
      for (const expire::MemoryBank& bank : streams_[b].banks) {
        std::vector<double> spans;
        for (const expire::MemoryEntry& m : bank.entries()) {
          if (m.has_span()) spans.push_back(m.span_value());
        }
        cached.new_spans.push_back(std::move(spans));
      }
      throw NumericHalt(std::string("step ") + std::to_string(index + 1) + ": " + e.what(),
                        diagnostic_dump(cached));
    }
    Tensor loss;
    try {
      loss = total_loss(run.task_loss, run.span_loss);
    } catch (const numerics::NumericError& e) {
      throw NumericHalt(std::string("step ") + std::to_string(index + 1) + ": " + e.what(),
                        diagnostic_dump(run.last_block));
    }
    tape.backward(numerics::scale(loss, inv_batch));
    out.task_loss += run.task_loss.item() * inv_batch;
    out.span_loss += run.span_loss.item() * inv_batch;
    const metrics::MemoryStats s = run.memory.stats();
    model::BlockStats agg;
    agg.resident_sum = s.avg_mem;
    agg.resident_count = 1;
    agg.peak = s.peak_mem;
    if (!std::isnan(s.avg_span)) {
      agg.span_sum = s.avg_span;
      agg.span_count = 1;
    }
    memory.add(agg);
  }
  out.optimizer = adam_step(params_, optim_, out.lr, config_.clip_norm, config_.adam);
  for (model::StreamState& s : streams_) model_.detach_boundary(s);
  out.memory = memory.stats();
  out.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
               .count();
  return out;
}

std::string Trainer::diagnostic_dump(const model::BlockResult& block) const {
  nlohmann::json dump;
  dump["step"] = step_count() + 1;
  nlohmann::json layers = nlohmann::json::array();
  for (size_t l = 0; l < block.new_spans.size(); ++l) {
    nlohmann::json layer;
    layer["layer"] = l;
    layer["spans"] = block.new_spans[l];
    if (l < block.captures.size() && block.captures[l].mask.defined()) {
      const Tensor& m = block.captures[l].mask;
      layer["mask_shape"] = m.shape();
      layer["mask"] = std::vector<double>(m.data().begin(), m.data().end());
      layer["births"] = block.captures[l].births;
    }
    layers.push_back(layer);
  }
  dump["layers"] = layers;
  return dump.dump(2);
}

namespace {

// log-softmax of one logits row at `target`, and the row argmax.
std::pair<double, int> score_row(std::span<const double> row, int target) {
  const double top = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - top);
  const int argmax = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  return {-(row[target] - top - std::log(z)), argmax};
}

}  // namespace

EvalResult evaluate(model::Model& model, const tasks::TaskStream& task, const EvalOptions& options) {
  numerics::NoGradGuard no_grad;
  model::BlockOptions block_options;
  block_options.training = false;
  block_options.prune = options.prune;
  block_options.max_span_override = options.max_span_override;
  const tasks::ScoreKind kind = task.score_kind();
  const int64_t k = model.config().block_size;
  const int64_t vocab = model.config().vocab_size;
  int64_t count = task.eval_segment_count();
  if (options.max_segments >= 0) count = std::min(count, options.max_segments);

  EvalResult r;
  metrics::MemoryTracker memory;
  model::StreamState state = model.new_stream();
  double nll_sum = 0.0;
  int64_t correct = 0;
  for (int64_t i = 0; i < count; ++i) {
    const tasks::Segment seg = task.eval_segment(i);
    if (seg.reset_memory) state = model.new_stream();
    const tasks::TaskSample& s = seg.sample;
    const auto len = static_cast<int64_t>(s.size());
    bool all_right = true;
    int64_t sample_scored = 0;
    for (int64_t start = 0; start < len; start += k) {
      const int64_t n = std::min(k, len - start);
      const model::BlockResult block = model.forward_block(
          state, std::span<const int>(s.input_tokens.data() + start, static_cast<size_t>(n)),
          block_options);
      memory.add(block.stats);
      const auto logits = block.logits.data();
      for (int64_t t = 0; t < n; ++t) {
        if (!s.loss_mask[start + t]) continue;
        const int target = s.target_tokens[start + t];
        const auto [nll, argmax] =
            score_row(logits.subspan(static_cast<size_t>(t * vocab), static_cast<size_t>(vocab)),
                      target);
        nll_sum += nll;
        ++r.scored_tokens;
        ++sample_scored;
        const bool right = argmax == target;
        all_right = all_right && right;
        if (kind == tasks::ScoreKind::kTokenAccuracy && right) ++correct;
      }
    }
    if (kind == tasks::ScoreKind::kSequenceExact && sample_scored > 0) {
      ++r.scored_units;
      if (all_right) ++correct;
    }
    ++r.segments;
  }
  if (kind == tasks::ScoreKind::kTokenAccuracy) r.scored_units = r.scored_tokens;
  r.task_loss = r.scored_tokens > 0 ? nll_sum / static_cast<double>(r.scored_tokens) : 0.0;
  r.bpb = metrics::bits_per_byte(r.task_loss);
  r.accuracy = r.scored_units > 0 ? static_cast<double>(correct) / static_cast<double>(r.scored_units)
                                  : 0.0;
  switch (kind) {
    case tasks::ScoreKind::kSequenceExact:
      r.metric = r.accuracy;
      break;
    case tasks::ScoreKind::kTokenAccuracy:
      r.metric = 1.0 - r.accuracy;
      break;
    case tasks::ScoreKind::kBitsPerByte:
      r.metric = r.bpb;
      break;
  }
  r.memory = memory.stats();
  return r;
}

std::vector<metrics::RunMetrics> train_loop(Trainer& trainer, model::Model& model,
                                            const tasks::TaskStream& task, const LoopHooks& hooks) {
  const TrainConfig& cfg = trainer.config();
  std::vector<metrics::RunMetrics> history;
  double task_sum = 0.0;
  double span_sum = 0.0;
  int64_t window = 0;
  std::deque<double> times;
  while (trainer.step_count() < cfg.total_steps) {
    const StepOutcome o = trainer.step();
    task_sum += o.task_loss;
    span_sum += o.span_loss;
    ++window;
    times.push_back(o.ms);
    if (static_cast<int>(times.size()) > cfg.timing_window) times.pop_front();
    if (o.step % cfg.eval_interval != 0 && o.step != cfg.total_steps) continue;

    const EvalResult ev = evaluate(model, task);
    metrics::RunMetrics m;
    m.step = o.step;
    m.task_loss = task_sum / static_cast<double>(window);
    m.span_loss = span_sum / static_cast<double>(window);
    if (task.score_kind() == tasks::ScoreKind::kBitsPerByte) m.bpb = ev.bpb;
    m.metric = ev.metric;
    m.avg_mem = ev.memory.avg_mem;
    m.peak_mem = static_cast<double>(ev.memory.peak_mem);
    m.ms_per_batch = metrics::median(std::vector<double>(times.begin(), times.end()));
    m.avg_span = ev.memory.avg_span;
    m.lr = o.lr;
    history.push_back(m);
    if (hooks.on_metrics) hooks.on_metrics(m);
    if (hooks.on_eval_step) hooks.on_eval_step(o.step);
    task_sum = span_sum = 0.0;
    window = 0;
  }
  return history;
}

}  // namespace xspan::train
