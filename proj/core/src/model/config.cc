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

#include "xspan/model/config.h"

#include "xspan/errors.h"

namespace xspan::model {

std::string to_string(AttentionMode mode) {
  return mode == AttentionMode::kExpireSpan ? "expire_span" : "fixed_span";
}

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "expire_span") return AttentionMode::kExpireSpan;
  if (name == "fixed_span") return AttentionMode::kFixedSpan;
  throw ConfigError("unknown attention mode '" + name + "' (expected expire_span or fixed_span)");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(n_layers >= 1, "n_layers must be >= 1");
  require(d_model >= 1 && n_heads >= 1, "d_model and n_heads must be positive");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(d_ff >= 1, "d_ff must be positive");
  require(block_size >= 1, "block_size must be positive");
  require(ramp >= 1, "ramp R must be >= 1");
  require(ramp <= max_span, "ramp R must not exceed max_span L");
  require(block_size <= max_span, "block_size K must not exceed max_span L");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(vocab_size >= 1, "vocab_size must be positive");
  require(!fixed_span_length || *fixed_span_length >= 0, "fixed_span_length must be >= 0");
}

}  // namespace xspan::model
