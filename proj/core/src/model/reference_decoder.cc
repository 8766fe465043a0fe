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

#include "xspan/model/reference_decoder.h"

#include <algorithm>
#include <cmath>

namespace xspan::model {

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix matmul(const Matrix& a, const numerics::Tensor& w) {
  const int64_t inner = w.dim(0);
  const int64_t cols = w.dim(1);
  const auto wd = w.data();
  Matrix out(a.size(), std::vector<double>(static_cast<size_t>(cols), 0.0));
  for (size_t r = 0; r < a.size(); ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int64_t k = 0; k < inner; ++k) acc += a[r][k] * wd[k * cols + c];
      out[r][c] = acc;
    }
  }
  return out;
}

void add_bias(Matrix& a, const numerics::Tensor& b) {
  for (auto& row : a) {
    for (size_t c = 0; c < row.size(); ++c) row[c] += b.data()[c];
  }
}

Matrix layer_norm(const Matrix& x, const numerics::Tensor& gain, const numerics::Tensor& bias) {
  Matrix out = x;
  for (auto& row : out) {
    const double d = static_cast<double>(row.size());
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= d;
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (size_t c = 0; c < row.size(); ++c) {
      row[c] = (row[c] - mu) * inv * gain.data()[c] + bias.data()[c];
    }
  }
  return out;
}

}  // namespace

std::vector<double> reference_logits(const Model& model, std::span<const int> tokens,
                                     std::optional<int64_t> window) {
  const ModelConfig& cfg = model.config();
  const auto n = static_cast<int64_t>(tokens.size());
  const int64_t d = cfg.d_model;
  const int64_t dh = cfg.head_dim();
  const int64_t buckets = cfg.position_buckets();

  Matrix x(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(d)));
  for (int64_t t = 0; t < n; ++t) {
    for (int64_t c = 0; c < d; ++c) x[t][c] = model.token_embedding().data()[tokens[t] * d + c];
  }

  for (const DecoderLayer& layer : model.layers()) {
    const Matrix h = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    const Matrix q = matmul(h, layer.w_query);
    const Matrix k = matmul(h, layer.w_key);
    const Matrix v = matmul(h, layer.w_value);
    Matrix attended(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(d), 0.0));
    for (int64_t hd = 0; hd < cfg.n_heads; ++hd) {
      for (int64_t t = 0; t < n; ++t) {
        const int64_t first = window ? std::max<int64_t>(0, t - *window) : 0;
        std::vector<double> logit;
        for (int64_t i = first; i <= t; ++i) {
          double s = 0.0;
          for (int64_t c = 0; c < dh; ++c) s += q[t][hd * dh + c] * k[i][hd * dh + c];
          const int64_t dist = std::min(t - i, buckets - 1);
          logit.push_back(s / std::sqrt(static_cast<double>(dh)) +
                          layer.position_bias.data()[hd * buckets + dist]);
        }
        const double top = *std::max_element(logit.begin(), logit.end());
        double z = 0.0;
        for (double& s : logit) z += (s = std::exp(s - top));
        for (int64_t i = first; i <= t; ++i) {
          const double w = logit[i - first] / z;
          for (int64_t c = 0; c < dh; ++c) attended[t][hd * dh + c] += w * v[i][hd * dh + c];
        }
      }
    }
    const Matrix proj = matmul(attended, layer.w_out);
    for (int64_t t = 0; t < n; ++t) {
      for (int64_t c = 0; c < d; ++c) x[t][c] += proj[t][c];
    }
    Matrix ff = matmul(layer_norm(x, layer.ln2_gain, layer.ln2_bias), layer.ff_in);
    add_bias(ff, layer.ff_in_bias);
    for (auto& row : ff) {
      for (double& u : row) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
    }
    Matrix out = matmul(ff, layer.ff_out);
    add_bias(out, layer.ff_out_bias);
    for (int64_t t = 0; t < n; ++t) {
      for (int64_t c = 0; c < d; ++c) x[t][c] += out[t][c];
    }
  }

  Matrix logits = matmul(layer_norm(x, model.final_gain(), model.final_bias()),
                         model.output_weight());
  add_bias(logits, model.output_bias());
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(n * cfg.vocab_size));
  for (const auto& row : logits) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

}  // namespace xspan::model
