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

#ifndef XSPAN_MODEL_REFERENCE_DECODER_H_
#define XSPAN_MODEL_REFERENCE_DECODER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xspan/model/decoder.h"

namespace xspan::model {

// Direct quadratic-attention decoder over a whole sequence, written with
// plain loops and no tape, no cache and no masks: query t attends to every
// i <= t (and t - i <= window when given). Reads the weights of `model`.
// Returns row-major [T x vocab] logits.
std::vector<double> reference_logits(const Model& model, std::span<const int> tokens,
                                     std::optional<int64_t> window = std::nullopt);

}  // namespace xspan::model

#endif  // XSPAN_MODEL_REFERENCE_DECODER_H_
