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


#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "xspan/errors.h"
#include "xspan/expire/memory_bank.h"
#include "xspan/expire/memory_size.h"
#include "xspan/expire/span.h"
#include "xspan/numerics/grad_check.h"
#include "xspan/numerics/ops.h"
#include "xspan/numerics/tape.h"

namespace xspan::expire {
namespace {

using numerics::Rng;
using numerics::Shape;
using numerics::Tensor;

// Independent brute force: memory i is live for query t > i when
// 1 + (e_i - (t - i)) / R > 0.
double count_live(const std::vector<double>& spans, double ramp, int64_t horizon) {
  int64_t total = 0;
  for (int64_t t = 0; t < horizon; ++t) {
    for (int64_t i = 0; i < std::min<int64_t>(t, static_cast<int64_t>(spans.size())); ++i) {
      const double m = std::max(0.0, std::min(1.0, 1.0 + (spans[i] - double(t - i)) / ramp));
      if (m > 0.0) ++total;
    }
  }
  return double(total) / double(horizon);
}

// A bank whose entries carry the given spans, born at `births`.
MemoryBank make_bank(const std::vector<double>& spans, const std::vector<int64_t>& births) {
  Tensor sv = Tensor::vector(spans);
  Tensor h(Shape{static_cast<int64_t>(spans.size()), 2}, 0.5);
  MemoryBank bank;
  for (size_t i = 0; i < spans.size(); ++i) {
    MemoryEntry e;
    const auto row = static_cast<int64_t>(i);
    e.hidden = {h, row};
    e.key = {h, row};
    e.value = {h, row};
    e.span = {sv, row};
    e.birth_time = births[i];
    bank.append(e);
  }
  return bank;
}

TEST(PredictSpanTest, ZeroWeightsGiveHalfTheMaximum) {
  SpanPredictor p = SpanPredictor::create(4, 16384, 128, false);
  Tensor h = Tensor::vector({0.3, -1.0, 2.0, 0.1});
  EXPECT_EQ(predict_span(p, h).item(), 8192.0);
  SpanPredictor q = SpanPredictor::create(4, 32768, 128, true);
  EXPECT_EQ(predict_span(q, h).item(), 16384.0);
}

TEST(PredictSpanTest, SigmoidOfLogit) {
  SpanPredictor p = SpanPredictor::create(2, 100, 8, false);
  p.weight = Tensor::vector({0.5, 0.25});
  p.bias = Tensor::vector({0.0});
  Tensor h = Tensor::vector({1.0, 2.0});  // w.h + b = 1
  EXPECT_NEAR(predict_span(p, h).item(), 73.10585786, 1e-8);
  SpanPredictor s = p;
  s.scaled_variant = true;
  EXPECT_NEAR(predict_span(s, h).item(), 100.0 / (1.0 + std::exp(-1.0 / 8.0)), 1e-12);
}

TEST(PredictSpanTest, BatchedRowsMatchSingleRows) {
  Rng rng(4);
  SpanPredictor p = SpanPredictor::create(3, 50, 5, false);
  p.weight = xspan::testing::random_tensor(rng, {3});
  Tensor h = xspan::testing::random_tensor(rng, {4, 3});
  Tensor all = predict_span(p, h);
  for (int r = 0; r < 4; ++r) {
    Tensor row = Tensor::vector({h.at(r, 0), h.at(r, 1), h.at(r, 2)});
    EXPECT_EQ(all.at(r), predict_span(p, row).item());
  }
}

TEST(PredictSpanTest, RejectsRampAboveMaximum) {
  SpanPredictor p = SpanPredictor::create(2, 10, 4, false);
  p.ramp = 11;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(RemainingSpanTest, Examples) {
  EXPECT_EQ(remaining_span(10, 0, 0), 10);
  EXPECT_EQ(remaining_span(10, 0, 10), 0);
  EXPECT_NEAR(remaining_span(73.1, 5, 40), 38.1, 1e-12);
  EXPECT_THROW(remaining_span(10, 5, 4), std::invalid_argument);
}

TEST(SoftMaskTest, ExactValues) {
  for (double ramp : {1.0, 4.0, 128.0}) {
    EXPECT_EQ(soft_mask(0.0, ramp), 1.0);
    EXPECT_EQ(soft_mask(-ramp / 2, ramp), 0.5);
    EXPECT_EQ(soft_mask(-ramp, ramp), 0.0);
    EXPECT_EQ(soft_mask(ramp, ramp), 1.0);
  }
  EXPECT_EQ(soft_mask(-64.0, 128.0), 0.5);
}

TEST(SoftMaskTest, GradientIsOneOverRampInsideOnly) {
  const double ramp = 8.0;
  Tensor r = Tensor::vector({-12.0, -8.0, -6.0, -1.0, 0.0, 3.0});
  r.set_requires_grad();
  numerics::Tape tape;
  {
    numerics::TapeScope scope(tape);
    tape.backward(numerics::sum(soft_mask(r, ramp)));
  }
  const double want[] = {0.0, 0.0, 1.0 / ramp, 1.0 / ramp, 0.0, 0.0};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(r.grad()[i], want[i]) << i;
}

TEST(SoftMaskTest, NonIncreasingInTime) {
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    const double e = rng.uniform(0, 50), ramp = rng.uniform(1, 10);
    double prev = 2.0;
    for (int64_t t = 0; t < 80; ++t) {
      const double m = soft_mask(remaining_span(e, 0, t), ramp);
      ASSERT_LE(m, prev);
      prev = m;
    }
  }
}

TEST(RenormalizeTest, WorkedExamples) {
  auto run = [](std::vector<double> a, std::vector<double> m) {
    return renormalize_attention(Tensor::matrix(1, 3, a), Tensor::matrix(1, 3, m));
  };
  const double third = 1.0 / 3.0;
  Tensor y1 = run({third, third, third}, {1, 1, 1});
  Tensor y2 = run({third, third, third}, {1, 1, 0});
  Tensor y3 = run({0.5, 0.3, 0.2}, {1, 0.5, 0});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(y1.at(0, j), third, 1e-12);
  EXPECT_NEAR(y2.at(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(y2.at(0, 1), 0.5, 1e-12);
  EXPECT_EQ(y2.at(0, 2), 0.0);
  EXPECT_NEAR(y3.at(0, 0), 0.7692307692307693, 1e-12);
  EXPECT_NEAR(y3.at(0, 1), 0.23076923076923078, 1e-12);
  EXPECT_EQ(y3.at(0, 2), 0.0);
}

TEST(RenormalizeTest, MaskSharedAcrossHeads) {
  Tensor a(Shape{2, 1, 3}, std::vector<double>{0.2, 0.3, 0.5, 0.6, 0.3, 0.1});
  Tensor m = Tensor::matrix(1, 3, {1.0, 0.0, 0.5});
  Tensor y = renormalize_attention(a, m);
  const double z0 = 0.2 + 0.25, z1 = 0.6 + 0.05;
  EXPECT_NEAR(y.data()[0], 0.2 / z0, 1e-15);
  EXPECT_EQ(y.data()[1], 0.0);
  EXPECT_NEAR(y.data()[2], 0.25 / z0, 1e-15);
  EXPECT_NEAR(y.data()[3], 0.6 / z1, 1e-15);
  EXPECT_EQ(y.data()[4], 0.0);
  EXPECT_NEAR(y.data()[5], 0.05 / z1, 1e-15);
}

TEST(RenormalizeTest, AllExpiredRowIsAnError) {
  EXPECT_THROW(renormalize_attention(Tensor::matrix(1, 2, {0.5, 0.5}), Tensor::matrix(1, 2, {0, 0})),
               numerics::DegenerateRowError);
}

TEST(PruneTest, BoundaryIsInclusive) {
  MemoryBank at_zero = make_bank({10.0}, {0});
  EXPECT_EQ(prune(at_zero, 26, 16.0), 1u);
  EXPECT_TRUE(at_zero.empty());
  MemoryBank still_live = make_bank({10.0}, {0});
  EXPECT_EQ(prune(still_live, 25, 16.0), 0u);
  EXPECT_EQ(still_live.size(), 1u);
  EXPECT_DOUBLE_EQ(soft_mask(remaining_span(10.0, 0, 25), 16.0), 1.0 / 16.0);
  MemoryBank empty;
  EXPECT_EQ(prune(empty, 100, 4.0), 0u);
}

TEST(PruneTest, KeepsSurvivorsInOrderAndCountsDeletions) {
  MemoryBank bank = make_bank({1.0, 50.0, 2.0, 40.0}, {0, 1, 2, 3});
  EXPECT_EQ(prune(bank, 20, 4.0), 2u);
  ASSERT_EQ(bank.size(), 2u);
  EXPECT_EQ(bank.entries()[0].birth_time, 1);
  EXPECT_EQ(bank.entries()[1].birth_time, 3);
  EXPECT_EQ(bank.deleted_count(), 2);
}

TEST(PruneTest, DeletedMemoriesNeverComeBack) {
  // Whatever prune removes at block start b has mask 0 for every t >= b.
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const double ramp = static_cast<double>(rng.uniform_int(1, 8));
    std::vector<double> spans(30);
    std::vector<int64_t> births(30);
    for (int i = 0; i < 30; ++i) {
      spans[i] = rng.uniform(0, 25);
      births[i] = i;
    }
    const int64_t start = rng.uniform_int(30, 60);
    MemoryBank bank = make_bank(spans, births);
    prune(bank, start, ramp);
    for (int i = 0; i < 30; ++i) {
      const bool kept = std::any_of(bank.entries().begin(), bank.entries().end(),
                                    [i](const MemoryEntry& e) { return e.birth_time == i; });
      if (kept) continue;
      for (int64_t t = start; t < start + 40; ++t) {
        ASSERT_EQ(soft_mask(remaining_span(spans[i], i, t), ramp), 0.0);
      }
    }
  }
}

TEST(PruneTest, FixedAndEvictRules) {
  MemoryBank bank = make_bank({0, 0, 0, 0}, {0, 5, 6, 9});
  EXPECT_EQ(prune_fixed(bank, 10, 4), 2u);
  EXPECT_EQ(bank.entries()[0].birth_time, 6);
  MemoryBank other = make_bank({0, 0, 0}, {0, 5, 9});
  EXPECT_EQ(evict_beyond(other, 10, 5), 1u);
  EXPECT_EQ(other.size(), 2u);
}

TEST(MemoryBankTest, RejectsOutOfOrderBirths) {
  MemoryBank bank = make_bank({1.0}, {3});
  MemoryEntry e = bank.entries()[0];
  EXPECT_THROW(bank.append(e), std::invalid_argument);
}

TEST(MemoryBankTest, DetachKeepsValuesAndDropsGradient) {
  Tensor src = Tensor::matrix(2, 2, {1.5, -2.0, 0.25, 3.0});
  src.set_requires_grad();
  Tensor sv = Tensor::vector({4.0, 5.0});
  sv.set_requires_grad();
  MemoryBank bank;
  for (int64_t i = 0; i < 2; ++i) {
    MemoryEntry e;
    e.hidden = e.key = e.value = {src, i};
    e.span = {sv, i};
    e.birth_time = i;
    bank.append(e);
  }
  bank.detach();
  for (int64_t i = 0; i < 2; ++i) {
    const MemoryEntry& e = bank.entries()[i];
    EXPECT_FALSE(e.key.source.requires_grad());
    EXPECT_FALSE(e.span.source.requires_grad());
    EXPECT_EQ(e.key.source.at(i, 0), src.at(i, 0));
    EXPECT_EQ(e.span_value(), sv.at(i));
    EXPECT_TRUE(e.key.source.same_storage(e.value.source));
  }
}

TEST(AuxSpanLossTest, Examples) {
  EXPECT_EQ(aux_span_loss(Tensor::vector({5.0, 7.0}), 0.0, 4).item(), 0.0);
  EXPECT_NEAR(aux_span_loss(Tensor::vector({100.0, 200.0}), 1e-6, 2).item(), 1.5e-4, 1e-18);
  EXPECT_EQ(aux_span_loss(Tensor(Shape{0}), 1e-6, 2).item(), 0.0);
  EXPECT_THROW(aux_span_loss(Tensor::vector({1.0}), -1.0, 2), ConfigError);
}

TEST(AuxSpanLossTest, GradientIsAlphaOverT) {
  Tensor e = Tensor::vector({3.0, 9.0, 1.0});
  e.set_requires_grad();
  numerics::Tape tape;
  {
    numerics::TapeScope scope(tape);
    tape.backward(aux_span_loss(e, 0.02, 8));
  }
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(e.grad()[i], 0.02 / 8);
}

TEST(MemorySizeTest, SingleMemoryLiveSteps) {
  EXPECT_EQ(live_steps(5.5, 2.0), 7);
  std::vector<double> one = {5.5};
  EXPECT_DOUBLE_EQ(count_live(one, 2.0, 21) * 21, 7.0);
  EXPECT_DOUBLE_EQ(memory_size_oracle(one, 2.0, 21) * 21, 7.0);
}

TEST(MemorySizeTest, TinySpansGiveAboutRampMinusOne) {
  std::vector<double> spans(2000, 1e-9);
  const double ramp = 6.0;
  const double avg = memory_size_oracle(spans, ramp, 2000);
  EXPECT_EQ(avg, count_live(spans, ramp, 2000));
  EXPECT_LE(std::abs(avg - (ramp - 1)), memory_size_slack(0.0, ramp, 2000));
}

TEST(MemorySizeTest, UnitRampIntegerSpansAreExact) {
  Rng rng(12);
  std::vector<double> spans(300);
  for (double& e : spans) e = static_cast<double>(rng.uniform_int(0, 20));
  // Horizon past the last expiry, so no memory is cut off.
  const int64_t horizon = 330;
  EXPECT_DOUBLE_EQ(count_live(spans, 1.0, horizon),
                   memory_size_closed_form(spans, 1.0, horizon));
  EXPECT_DOUBLE_EQ(memory_size_oracle(spans, 1.0, horizon), count_live(spans, 1.0, horizon));
}

class MemorySizeIdentityTest : public ::testing::TestWithParam<int> {};

TEST_P(MemorySizeIdentityTest, ClosedFormWithinSlack) {
  Rng rng(Rng::derive(0x4e, static_cast<uint64_t>(GetParam())));
  const double max_span = 30.0;
  const double ramp = static_cast<double>(rng.uniform_int(1, 12));
  const int64_t horizon = 1500;
  std::vector<double> spans(horizon);
  for (double& e : spans) e = rng.uniform(0.0, max_span);
  const double brute = count_live(spans, ramp, horizon);
  EXPECT_DOUBLE_EQ(memory_size_oracle(spans, ramp, horizon), brute);
  EXPECT_LE(std::abs(brute - memory_size_closed_form(spans, ramp, horizon)),
            2.0 * (max_span + ramp) / double(horizon) + 1.0);
}

INSTANTIATE_TEST_SUITE_P(Seeds, MemorySizeIdentityTest, ::testing::Range(0, 100));

TEST(SpanTraceTest, CsvLayout) {
  std::vector<SpanTraceRow> rows = {{0, 0, 3, 12.5}, {1, 4, 2, 0.25}};
  std::ostringstream out;
  write_span_trace_csv(out, rows);
  EXPECT_EQ(out.str(), "layer,position,token,span\n0,0,3,12.5\n1,4,2,0.25\n");
}

}  // namespace
}  // namespace xspan::expire
