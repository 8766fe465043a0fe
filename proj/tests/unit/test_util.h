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


#ifndef XSPAN_TESTS_UNIT_TEST_UTIL_H_
#define XSPAN_TESTS_UNIT_TEST_UTIL_H_

#include <algorithm>
#include <cstring>
#include <span>
#include <vector>

#include "xspan/model/decoder.h"
#include "xspan/numerics/ops.h"
#include "xspan/numerics/rng.h"
#include "xspan/numerics/tape.h"
#include "xspan/numerics/tensor.h"

namespace xspan::testing {

inline numerics::Tensor random_tensor(numerics::Rng& rng, numerics::Shape shape,
                                      double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(numerics::numel(shape)));
  for (double& x : v) x = scale * rng.normal();
  return numerics::Tensor(std::move(shape), std::move(v));
}

inline std::vector<int> random_tokens(numerics::Rng& rng, int64_t n, int vocab) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int& t : out) t = static_cast<int>(rng.uniform_int(0, vocab - 1));
  return out;
}

inline model::ModelConfig tiny_config(int vocab = 6) {
  model::ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.block_size = 8;
  cfg.max_span = 16;
  cfg.ramp = 4;
  cfg.vocab_size = vocab;
  return cfg;
}

// Random span predictors and position biases (both start at zero).
inline void perturb_model(model::Model& m, numerics::Rng& rng, double bias_lo, double bias_hi) {
  for (model::DecoderLayer& layer : m.mutable_layers()) {
    numerics::Tensor pb = layer.position_bias;
    for (double& x : pb.mutable_data()) x = 0.3 * rng.normal();
    if (layer.span_predictor) {
      numerics::Tensor w = layer.span_predictor->weight;
      for (double& x : w.mutable_data()) x = rng.normal();
      numerics::Tensor b = layer.span_predictor->bias;
      b.mutable_data()[0] = rng.uniform(bias_lo, bias_hi);
    }
  }
}

inline void set_span_bias(model::Model& m, double bias) {
  for (model::DecoderLayer& layer : m.mutable_layers()) {
    numerics::Tensor w = layer.span_predictor->weight;
    for (double& x : w.mutable_data()) x = 0.0;
    numerics::Tensor b = layer.span_predictor->bias;
    b.mutable_data()[0] = bias;
  }
}

// Logits of every block of `tokens`, concatenated row-major.
inline std::vector<double> stream_logits(model::Model& m, const std::vector<int>& tokens,
                                         const model::BlockOptions& options = {},
                                         model::StreamState* state_out = nullptr) {
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
  }
  if (state_out) *state_out = std::move(state);
  return out;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace xspan::testing

#endif  // XSPAN_TESTS_UNIT_TEST_UTIL_H_
