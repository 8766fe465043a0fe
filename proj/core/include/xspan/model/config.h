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

#ifndef XSPAN_MODEL_CONFIG_H_
#define XSPAN_MODEL_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>

namespace xspan::model {

enum class AttentionMode { kExpireSpan, kFixedSpan };

std::string to_string(AttentionMode mode);
// Accepts "expire_span" and "fixed_span"; throws ConfigError otherwise.
AttentionMode parse_attention_mode(const std::string& name);

struct ModelConfig {
  int n_layers = 2;
  int d_model = 32;
  int n_heads = 2;
  int d_ff = 64;
  int block_size = 64;    // K, tokens per block
  int64_t max_span = 512;  // L, timesteps
  int64_t ramp = 32;       // R, timesteps
  AttentionMode mode = AttentionMode::kExpireSpan;
  // Fixed-span window; nullopt means unbounded (full causal attention).
  std::optional<int64_t> fixed_span_length;
  double dropout = 0.0;
  int vocab_size = 0;
  bool scaled_variant = false;
  // Start the position bias of head h at -2^(-8(h+1)/H) * distance instead
  // of zero.
  bool recency_bias_init = false;

  // Throws ConfigError on any violated invariant.
  void validate() const;

  int head_dim() const { return d_model / n_heads; }
  // Relative distances are clipped to [0, L + R].
  int64_t max_distance() const { return max_span + ramp; }
  int64_t position_buckets() const { return max_distance() + 1; }
};

}  // namespace xspan::model

#endif  // XSPAN_MODEL_CONFIG_H_
