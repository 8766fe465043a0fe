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


// Finite-difference checks of every differentiable op, one instance per seed.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "xspan/expire/span.h"
#include "xspan/numerics/grad_check.h"
#include "xspan/numerics/ops.h"

namespace xspan::numerics {
namespace {

using xspan::testing::random_tensor;
using xspan::testing::random_tokens;

constexpr double kTol = 1e-6;

class OpGradientTest : public ::testing::TestWithParam<int> {
 protected:
  Rng rng_{Rng::derive(0x6a7d, static_cast<uint64_t>(GetParam()))};

  // Weighted sum so that every output coordinate matters.
  std::function<Tensor(const Tensor&)> weigh(Shape shape) {
    Tensor w = random_tensor(rng_, std::move(shape));
    return [w](const Tensor& y) { return sum(mul(y, w)); };
  }

  double check(const ScalarFn& f, std::vector<Tensor> inputs, const ProbeFilter& filter = nullptr) {
    return grad_check(f, inputs, 1e-5, filter).max_rel_error;
  }
};

TEST_P(OpGradientTest, Elementwise) {
  Tensor a = random_tensor(rng_, {7}), b = random_tensor(rng_, {7});
  for (double& v : b.mutable_data()) v += v >= 0 ? 1.0 : -1.0;
  auto w = weigh({7});
  EXPECT_LT(check([=] { return w(add(a, b)); }, {a, b}), kTol);
  EXPECT_LT(check([=] { return w(sub(a, b)); }, {a, b}), kTol);
  EXPECT_LT(check([=] { return w(mul(a, b)); }, {a, b}), kTol);
  EXPECT_LT(check([=] { return w(div(a, b)); }, {a, b}), kTol);
  EXPECT_LT(check([=] { return w(scale(add_scalar(a, 0.3), -1.7)); }, {a}), kTol);
  EXPECT_LT(check([=] { return w(sigmoid(a)); }, {a}), kTol);
  EXPECT_LT(check([=] { return w(gelu(a)); }, {a}), kTol);
}

TEST_P(OpGradientTest, LinearAlgebra) {
  Tensor a = random_tensor(rng_, {3, 4}), b = random_tensor(rng_, {4, 5}),
         c = random_tensor(rng_, {5, 4});
  auto w = weigh({3, 5});
  EXPECT_LT(check([=] { return w(matmul(a, b)); }, {a, b}), kTol);
  EXPECT_LT(check([=] { return w(matmul_nt(a, c)); }, {a, c}), kTol);
  Tensor v = random_tensor(rng_, {5});
  Tensor x = random_tensor(rng_, {3, 5});
  EXPECT_LT(check([=] { return w(add_row_vector(x, v)); }, {x, v}), kTol);
  auto wt = weigh({5, 3});
  EXPECT_LT(check([=] { return wt(transpose(x)); }, {x}), kTol);
}

TEST_P(OpGradientTest, ShapeOps) {
  Tensor x = random_tensor(rng_, {4, 3}), y = random_tensor(rng_, {2, 3});
  auto w6 = weigh({6, 3});
  EXPECT_LT(check([=] {
              std::vector<Tensor> parts = {x, y};
              return w6(concat_rows(parts));
            },
            {x, y}),
            kTol);
  auto w2 = weigh({2, 3});
  EXPECT_LT(check([=] { return w2(slice_rows(x, 1, 2)); }, {x}), kTol);
  auto wc = weigh({4, 5});
  Tensor z = random_tensor(rng_, {4, 2});
  EXPECT_LT(check([=] {
              std::vector<Tensor> parts = {x, z};
              return wc(concat_cols(parts));
            },
            {x, z}),
            kTol);
  auto ws = weigh({4, 2});
  EXPECT_LT(check([=] { return ws(slice_cols(x, 1, 2)); }, {x}), kTol);
  auto wr = weigh({12});
  EXPECT_LT(check([=] { return wr(reshape(x, {12})); }, {x}), kTol);
  auto wg = weigh({3, 3});
  EXPECT_LT(check([=] {
              std::vector<RowRef> rows = {{x, 2}, {y, 0}, {x, 2}};
              return wg(gather_rows(rows));
            },
            {x, y}),
            kTol);
  auto we = weigh({3});
  EXPECT_LT(check([=] {
              std::vector<RowRef> el = {{x, 5}, {y, 1}, {x, 5}};
              return we(gather_elements(el));
            },
            {x, y}),
            kTol);
  Tensor v = random_tensor(rng_, {3});
  EXPECT_LT(check([=] { return wg(repeat_rows(v, 3)); }, {v}), kTol);
  std::vector<int64_t> idx = {0, 11, 4, 4};
  auto wt = weigh({2, 2});
  EXPECT_LT(check([=] { return wt(gather_table(x, idx, {2, 2})); }, {x}), kTol);
  EXPECT_LT(check([=] { return mean(x); }, {x}), kTol);
}

TEST_P(OpGradientTest, Normalization) {
  Tensor x = random_tensor(rng_, {3, 6});
  auto w = weigh({3, 6});
  EXPECT_LT(check([=] { return w(softmax(x, 1)); }, {x}), kTol);
  Tensor g = random_tensor(rng_, {6}), b = random_tensor(rng_, {6});
  EXPECT_LT(check([=] { return w(layer_norm(x, g, b)); }, {x, g, b}), kTol);
}

TEST_P(OpGradientTest, MaskedSoftmaxInScoresAndLiveMask) {
  Tensor s = random_tensor(rng_, {3, 6});
  std::vector<double> mv(18);
  for (size_t i = 0; i < mv.size(); ++i) {
    mv[i] = (i % 6 == 0 || rng_.bernoulli(0.6)) ? rng_.uniform(0.1, 1.0) : 0.0;
  }
  Tensor m(Shape{3, 6}, mv);
  auto w = weigh({3, 6});
  // At m == 0 the derivative in m is one-sided; only live entries are probed.
  EXPECT_LT(check([=] { return w(masked_softmax(s, m)); }, {s, m},
                  [mv](std::size_t t, int64_t j) { return t == 0 || mv[j] > 0.0; }),
            kTol);
}

TEST_P(OpGradientTest, ClampRampAwayFromKinks) {
  Tensor x = random_tensor(rng_, {9}, 0.8);
  for (double& v : x.mutable_data()) v += 0.5;
  std::vector<double> xv(x.data().begin(), x.data().end());
  auto w = weigh({9});
  EXPECT_LT(check([=] { return w(clamp01ramp(x)); }, {x},
                  [xv](std::size_t, int64_t j) {
                    return std::abs(xv[j]) > 1e-3 && std::abs(xv[j] - 1.0) > 1e-3;
                  }),
            kTol);
}

TEST_P(OpGradientTest, LossesAndLookups) {
  Tensor logits = random_tensor(rng_, {5, 4});
  const std::vector<int> targets = random_tokens(rng_, 5, 4);
  std::vector<uint8_t> mask(5);
  for (auto& m : mask) m = rng_.bernoulli(0.7) ? 1 : 0;
  mask[0] = 1;
  EXPECT_LT(check([=] { return cross_entropy(logits, targets, mask); }, {logits}), kTol);
  Tensor table = random_tensor(rng_, {4, 3});
  const std::vector<int> ids = random_tokens(rng_, 6, 4);
  auto w = weigh({6, 3});
  EXPECT_LT(check([=] { return w(embedding(table, ids)); }, {table}), kTol);
}

TEST_P(OpGradientTest, SpanOps) {
  const int64_t rows = 3, cols = 5;
  Tensor spans = random_tensor(rng_, {cols}, 3.0);
  for (double& e : spans.mutable_data()) e = std::abs(e) + 1.0;
  std::vector<double> dist(rows * cols);
  for (double& d : dist) d = static_cast<double>(rng_.uniform_int(0, 9));
  const double ramp = 4.0;
  // Probe only spans that keep every ramp argument off the kinks.
  std::vector<double> sv(spans.data().begin(), spans.data().end());
  auto safe = [=](std::size_t, int64_t j) {
    for (int64_t r = 0; r < rows; ++r) {
      const double x = expire::ramp_argument(sv[j], dist[r * cols + j], ramp);
      if (std::abs(x) < 1e-3 || std::abs(x - 1.0) < 1e-3) return false;
    }
    return true;
  };
  auto w = weigh({rows, cols});
  EXPECT_LT(check([=] {
              return w(clamp01ramp(expire::ramp_argument_grid(spans, dist, rows, ramp)));
            },
            {spans}, safe),
            kTol);

  std::vector<double> av(2 * rows * cols);
  for (size_t r = 0; r < av.size(); r += cols) {
    double z = 0.0;
    for (int64_t j = 0; j < cols; ++j) z += av[r + j] = rng_.uniform(0.05, 1.0);
    for (int64_t j = 0; j < cols; ++j) av[r + j] /= z;
  }
  Tensor a(Shape{2, rows, cols}, av);
  std::vector<double> mv(rows * cols);
  for (size_t i = 0; i < mv.size(); ++i) mv[i] = i % cols == 0 ? 1.0 : rng_.uniform(0.05, 1.0);
  Tensor m(Shape{rows, cols}, mv);
  auto w3 = weigh({2, rows, cols});
  EXPECT_LT(check([=] { return w3(expire::renormalize_attention(a, m)); }, {a, m}), kTol);

  Tensor h = random_tensor(rng_, {4, 6});
  expire::SpanPredictor p = expire::SpanPredictor::create(6, 40, 8, GetParam() % 2 == 1);
  p.weight = random_tensor(rng_, {6});
  p.bias = random_tensor(rng_, {1});
  auto wp = weigh({4});
  EXPECT_LT(check([=] { return wp(expire::predict_span(p, h)); }, {h, p.weight, p.bias}), kTol);

  Tensor in_ramp = random_tensor(rng_, {3});
  EXPECT_LT(check([=] { return expire::aux_span_loss(in_ramp, 0.01, 8); }, {in_ramp}), kTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradientTest, ::testing::Range(0, 100));

}  // namespace
}  // namespace xspan::numerics
