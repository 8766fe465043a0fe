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

#include "xspan/cli/selftest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <sstream>

#include "xspan/expire/memory_size.h"
#include "xspan/expire/span.h"
#include "xspan/model/decoder.h"
#include "xspan/model/reference_decoder.h"
#include "xspan/numerics/grad_check.h"
#include "xspan/numerics/ops.h"
#include "xspan/train/trainer.h"

namespace xspan::cli {

using numerics::Rng;
using numerics::Shape;
using numerics::Tensor;

bool SelftestReport::passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(numerics::numel(shape)));
  for (double& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

void randomize(const Tensor& t, Rng& rng, double scale) {
  Tensor h = t;
  for (double& x : h.mutable_data()) x = scale * rng.normal();
}

// Fills the span predictors and position biases, which start at zero.
void perturb_model(model::Model& m, Rng& rng, double bias_lo, double bias_hi) {
  for (model::DecoderLayer& layer : m.mutable_layers()) {
    randomize(layer.position_bias, rng, 0.3);
    if (layer.span_predictor) {
      randomize(layer.span_predictor->weight, rng, 1.0);
      Tensor b = layer.span_predictor->bias;
      b.mutable_data()[0] = rng.uniform(bias_lo, bias_hi);
    }
  }
}

std::vector<int> random_tokens(Rng& rng, int64_t n, int vocab) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int& t : out) t = static_cast<int>(rng.uniform_int(0, vocab - 1));
  return out;
}

// Logits of every block of `tokens`, concatenated.
std::vector<double> stream_logits(model::Model& m, const std::vector<int>& tokens,
                                  const model::BlockOptions& options, int64_t* peak = nullptr,
                                  int64_t* deleted = nullptr) {
  numerics::NoGradGuard no_grad;
  model::StreamState state = m.new_stream();
  std::vector<double> out;
  const int64_t k = m.config().block_size;
  const auto len = static_cast<int64_t>(tokens.size());
  for (int64_t s = 0; s < len; s += k) {
    const int64_t n = std::min(k, len - s);
    const model::BlockResult r = m.forward_block(
        state, std::span<const int>(tokens.data() + s, static_cast<size_t>(n)), options);
    out.insert(out.end(), r.logits.data().begin(), r.logits.data().end());
    if (peak) *peak = std::max(*peak, r.stats.peak);
  }
  if (deleted) {
    for (const auto& b : state.banks) *deleted += b.deleted_count();
  }
  return out;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

CheckResult timed(const std::string& name, const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

CheckResult check_mask_algebra() {
  return timed("mask_algebra", [](CheckResult& r) {
    r.tolerance = 1e-12;
    double worst = 0.0;
    bool exact = true;
    for (double ramp : {1.0, 4.0, 16.0, 128.0}) {
      const double rs[] = {0.0, -ramp / 2.0, -ramp, ramp};
      const double want[] = {1.0, 0.5, 0.0, 1.0};
      for (int i = 0; i < 4; ++i) exact = exact && expire::soft_mask(rs[i], ramp) == want[i];
    }
    struct Case {
      std::vector<double> a, m, want;
    };
    const Case cases[] = {
        {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {1, 1, 1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}},
        {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {1, 1, 0}, {0.5, 0.5, 0.0}},
        {{0.5, 0.3, 0.2}, {1, 0.5, 0}, {0.5 / 0.65, 0.15 / 0.65, 0.0}},
    };
    for (const Case& c : cases) {
      const Tensor out = expire::renormalize_attention(Tensor::matrix(1, 3, c.a),
                                                       Tensor::matrix(1, 3, c.m));
      for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(out.at(0, j) - c.want[j]));
    }
    r.measured = worst;
    r.passed = exact && worst <= r.tolerance;
    r.detail = exact ? "soft_mask values exact" : "soft_mask values not exact";
  });
}

CheckResult check_op_gradients(int seeds) {
  return timed("op_gradients", [seeds](CheckResult& r) {
    r.tolerance = 1e-6;
    double worst = 0.0;
    std::string worst_op;
    auto probe = [&](const std::string& op, const numerics::ScalarFn& f, std::vector<Tensor> in,
                     const numerics::ProbeFilter& filter = nullptr) {
      const auto rep = numerics::grad_check(f, in, 1e-5, filter);
      if (rep.max_rel_error > worst) {
        worst = rep.max_rel_error;
        worst_op = op;
      }
    };
    for (int seed = 0; seed < seeds; ++seed) {
      Rng rng(Rng::derive(0x5e1f, static_cast<uint64_t>(seed)));
      // Weighted sums make every output coordinate matter.
      auto weigh = [](const Tensor& w) {
        return [w](const Tensor& y) { return numerics::sum(numerics::mul(y, w)); };
      };
      {
        Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 2});
        auto w = weigh(random_tensor(rng, {3, 2}));
        probe("matmul", [=] { return w(numerics::matmul(a, b)); }, {a, b});
      }
      {
        Tensor x = random_tensor(rng, {3, 5});
        auto w = weigh(random_tensor(rng, {3, 5}));
        probe("softmax", [=] { return w(numerics::softmax(x, 1)); }, {x});
        probe("sigmoid", [=] { return w(numerics::sigmoid(x)); }, {x});
        probe("gelu", [=] { return w(numerics::gelu(x)); }, {x});
        Tensor g = random_tensor(rng, {5}), b = random_tensor(rng, {5});
        probe("layer_norm", [=] { return w(numerics::layer_norm(x, g, b)); }, {x, g, b});
      }
      {
        Tensor s = random_tensor(rng, {3, 5});
        std::vector<double> mv(15);
        for (size_t i = 0; i < mv.size(); ++i) {
          mv[i] = (i % 5 == 0 || rng.bernoulli(0.7)) ? rng.uniform(0.1, 1.0) : 0.0;
        }
        Tensor m(Shape{3, 5}, mv);
        auto w = weigh(random_tensor(rng, {3, 5}));
        // The derivative in m is one-sided where m == 0; only probe m > 0.
        probe("masked_softmax", [=] { return w(numerics::masked_softmax(s, m)); }, {s, m},
              [mv](std::size_t t, int64_t j) { return t == 0 || mv[j] > 0.0; });
      }
      {
        Tensor x = random_tensor(rng, {8}, 1.0);
        auto w = weigh(random_tensor(rng, {8}));
        std::vector<double> xv(x.data().begin(), x.data().end());
        probe("clamp01ramp", [=] { return w(numerics::clamp01ramp(x)); }, {x},
              [xv](std::size_t, int64_t j) {
                return std::abs(xv[j]) > 1e-3 && std::abs(xv[j] - 1.0) > 1e-3;
              });
        Tensor inside(Shape{6}, std::vector<double>{0.05, 0.2, 0.4, 0.5, 0.7, 0.95});
        auto w6 = weigh(random_tensor(rng, {6}));
        probe("clamp01ramp", [=] { return w6(numerics::clamp01ramp(inside)); }, {inside});
      }
      {
        Tensor logits = random_tensor(rng, {4, 5});
        std::vector<int> targets = random_tokens(rng, 4, 5);
        std::vector<uint8_t> mask = {1, 0, 1, 1};
        probe("cross_entropy", [=] { return numerics::cross_entropy(logits, targets, mask); },
              {logits});
        Tensor table = random_tensor(rng, {5, 3});
        std::vector<int> ids = {0, 3, 3, 1};
        auto w = weigh(random_tensor(rng, {4, 3}));
        probe("embedding", [=] { return w(numerics::embedding(table, ids)); }, {table});
      }
      {
        Tensor a = random_tensor(rng, {6}), b = random_tensor(rng, {6});
        for (double& v : b.mutable_data()) v = (v >= 0 ? 1.0 : -1.0) + v;
        auto w = weigh(random_tensor(rng, {6}));
        probe("div", [=] { return w(numerics::div(a, b)); }, {a, b});
        probe("mul", [=] { return w(numerics::mul(a, b)); }, {a, b});
      }
      {
        Tensor spans(Shape{4}, std::vector<double>{3.3, 7.1, 1.6, 9.4});
        const std::vector<double> dist = {2, 5, 9, 0, 4, 6, 11, 1};
        auto w = weigh(random_tensor(rng, {2, 4}));
        probe("ramp_argument_grid",
              [=] { return w(expire::ramp_argument_grid(spans, dist, 2, 4.0)); }, {spans});
        Tensor h = random_tensor(rng, {3, 4});
        expire::SpanPredictor p = expire::SpanPredictor::create(4, 50, 8, seed % 2 == 1);
        Tensor pw = random_tensor(rng, {4}), pb = random_tensor(rng, {1});
        auto w3 = weigh(random_tensor(rng, {3}));
        probe("predict_span",
              [=] {
                expire::SpanPredictor q = p;
                q.weight = pw;
                q.bias = pb;
                return w3(expire::predict_span(q, h));
              },
              {h, pw, pb});
      }
    }
    r.measured = worst;
    r.passed = worst <= r.tolerance;
    r.detail = "worst op: " + (worst_op.empty() ? std::string("none") : worst_op);
  });
}

CheckResult check_end_to_end_gradient() {
  return timed("end_to_end_gradient", [](CheckResult& r) {
    r.tolerance = 1e-4;
    model::ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.block_size = 8;
    cfg.max_span = 16;
    cfg.ramp = 4;
    cfg.vocab_size = 6;
    model::Model m(cfg, 11);
    Rng rng(2024);
    perturb_model(m, rng, -0.5, 0.5);
    tasks::TaskSample sample;
    sample.input_tokens = random_tokens(rng, 32, cfg.vocab_size);
    sample.target_tokens = random_tokens(rng, 32, cfg.vocab_size);
    sample.loss_mask.assign(32, 1);

    model::BlockOptions options;
    options.alpha = 1e-3;
    int64_t in_ramp = 0;
    {
      numerics::NoGradGuard no_grad;
      model::StreamState state = m.new_stream();
      for (int64_t s = 0; s < 32; s += 8) {
        in_ramp += m.forward_block(state, std::span<const int>(sample.input_tokens.data() + s, 8),
                                   options)
                       .stats.in_ramp;
      }
    }
    auto f = [&] {
      model::StreamState state = m.new_stream();
      const train::SegmentOutput out = train::run_segment(m, state, sample, options);
      return train::total_loss(out.task_loss, out.span_loss);
    };
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& [name, t] : m.parameters()) {
      params.push_back(t);
      names.push_back(name);
    }
    const auto rep = numerics::grad_check(f, params, 1e-6);
    r.measured = rep.max_rel_error;
    r.passed = in_ramp > 0 && rep.max_rel_error <= r.tolerance;
    std::ostringstream d;
    d << rep.checked << " coordinates, " << in_ramp << " in-ramp memories, worst "
      << names[rep.worst_tensor] << "[" << rep.worst_index << "]";
    r.detail = d.str();
  });
}

CheckResult check_memory_size_identity() {
  return timed("memory_size_identity", [](CheckResult& r) {
    const double max_span = 100.0, ramp = 16.0;
    const int64_t horizon = 5000;
    r.tolerance = expire::memory_size_slack(max_span, ramp, horizon);
    double worst = 0.0;
    for (int set = 0; set < 20; ++set) {
      Rng rng(Rng::derive(0xe4, static_cast<uint64_t>(set)));
      std::vector<double> spans(static_cast<size_t>(horizon));
      for (double& e : spans) e = rng.uniform(0.0, max_span);
      const double oracle = expire::memory_size_oracle(spans, ramp, horizon);
      const double closed = expire::memory_size_closed_form(spans, ramp, horizon);
      worst = std::max(worst, std::abs(oracle - closed));
    }
    r.measured = worst;
    r.passed = worst <= r.tolerance;
    r.detail = "20 span sets, L=100 R=16 T=5000";
  });
}

CheckResult check_pruning_soundness() {
  return timed("pruning_soundness", [](CheckResult& r) {
    r.tolerance = 0.0;
    int mismatches = 0;
    int64_t deleted = 0;
    bool bound_ok = true;
    for (int c = 0; c < 10; ++c) {
      Rng rng(Rng::derive(0x9a7e, static_cast<uint64_t>(c)));
      model::ModelConfig cfg;
      cfg.n_layers = static_cast<int>(rng.uniform_int(1, 3));
      cfg.n_heads = static_cast<int>(rng.uniform_int(1, 2));
      cfg.d_model = cfg.n_heads * 4 * static_cast<int>(rng.uniform_int(1, 2));
      cfg.d_ff = 2 * cfg.d_model;
      cfg.block_size = static_cast<int>(rng.uniform_int(2, 8));
      cfg.max_span = rng.uniform_int(cfg.block_size, 40);
      cfg.ramp = rng.uniform_int(1, cfg.max_span);
      cfg.vocab_size = 7;
      cfg.scaled_variant = rng.bernoulli(0.3);
      model::Model m(cfg, 100 + static_cast<uint64_t>(c));
      perturb_model(m, rng, -4.0, 1.0);
      const std::vector<int> tokens = random_tokens(rng, 150, cfg.vocab_size);
      model::BlockOptions on, off;
      off.prune = false;
      int64_t peak = 0;
      const auto a = stream_logits(m, tokens, on, &peak, &deleted);
      const auto b = stream_logits(m, tokens, off);
      if (!bit_equal(a, b)) ++mismatches;
      bound_ok = bound_ok && peak <= cfg.max_span + cfg.ramp + cfg.block_size;
    }
    r.measured = mismatches;
    r.passed = mismatches == 0 && deleted > 0 && bound_ok;
    r.detail = std::to_string(mismatches) + " of 10 configs differ, " + std::to_string(deleted) +
               " memories pruned" + (bound_ok ? "" : ", bank bound violated");
  });
}

CheckResult check_baseline_equivalence() {
  return timed("baseline_equivalence", [](CheckResult& r) {
    r.tolerance = 1e-10;
    int forced_mismatch = 0;
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
      Rng rng(Rng::derive(0xba5e, static_cast<uint64_t>(c)));
      model::ModelConfig cfg;
      cfg.n_layers = 2;
      cfg.n_heads = 2;
      cfg.d_model = 8;
      cfg.d_ff = 16;
      cfg.block_size = 6;
      cfg.max_span = 12 + 4 * c;
      cfg.ramp = 3 + c;
      cfg.vocab_size = 9;
      model::Model expire_model(cfg, 7 + static_cast<uint64_t>(c));
      perturb_model(expire_model, rng, -3.0, 0.0);
      model::ModelConfig fixed_cfg = cfg;
      fixed_cfg.mode = model::AttentionMode::kFixedSpan;
      fixed_cfg.fixed_span_length = cfg.max_span + cfg.ramp;
      model::Model fixed_model(fixed_cfg, 0);
      model::copy_parameters(expire_model, fixed_model);
      const std::vector<int> tokens = random_tokens(rng, 90, cfg.vocab_size);
      model::BlockOptions forced;
      forced.force_unit_mask = true;
      if (!bit_equal(stream_logits(expire_model, tokens, forced),
                     stream_logits(fixed_model, tokens, {}))) {
        ++forced_mismatch;
      }

      model::ModelConfig full_cfg = fixed_cfg;
      full_cfg.fixed_span_length.reset();
      model::Model full_model(full_cfg, 0);
      model::copy_parameters(expire_model, full_model);
      for (int64_t len : {static_cast<int64_t>(cfg.block_size), int64_t{4}}) {
        const std::vector<int> seq(tokens.begin(), tokens.begin() + len);
        const auto got = stream_logits(full_model, seq, {});
        const auto want = model::reference_logits(full_model, seq);
        for (size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
      }
    }
    r.measured = worst;
    r.passed = forced_mismatch == 0 && worst <= r.tolerance;
    r.detail = std::to_string(forced_mismatch) + " of 3 forced-mask runs differ from fixed L+R";
  });
}

SelftestReport run_selftest(Fault fault) {
  const double previous = numerics::testing_hooks::ramp_gradient_factor();
  if (fault == Fault::kRampGradient) numerics::testing_hooks::set_ramp_gradient_factor(0.5);
  SelftestReport report;
  report.checks.push_back(check_mask_algebra());
  report.checks.push_back(check_op_gradients(20));
  report.checks.push_back(check_end_to_end_gradient());
  report.checks.push_back(check_memory_size_identity());
  report.checks.push_back(check_pruning_soundness());
  report.checks.push_back(check_baseline_equivalence());
  numerics::testing_hooks::set_ramp_gradient_factor(previous);
  return report;
}

void print_report(std::ostream& out, const SelftestReport& report) {
  for (const CheckResult& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << c.name
        << " measured=" << std::setprecision(3) << std::scientific << c.measured
        << " tolerance=" << c.tolerance << std::defaultfloat << std::setprecision(2) << "  ("
        << std::fixed << c.seconds << " s)  " << std::defaultfloat << std::setprecision(6)
        << c.detail << '\n';
  }
  const auto failed = std::count_if(report.checks.begin(), report.checks.end(),
                                    [](const CheckResult& c) { return !c.passed; });
  out << (failed == 0 ? "selftest passed" : "selftest FAILED") << ": "
      << report.checks.size() - static_cast<size_t>(failed) << "/" << report.checks.size()
      << " checks\n";
}

}  // namespace xspan::cli
