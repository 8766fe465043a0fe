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

#ifndef XSPAN_MODEL_DECODER_H_
#define XSPAN_MODEL_DECODER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xspan/expire/memory_bank.h"
#include "xspan/expire/span.h"
#include "xspan/model/config.h"
#include "xspan/numerics/rng.h"
#include "xspan/numerics/tensor.h"

namespace xspan::model {

struct DecoderLayer {
  numerics::Tensor ln1_gain, ln1_bias;
  numerics::Tensor w_query, w_key, w_value, w_out;  // [d x d]
  numerics::Tensor ln2_gain, ln2_bias;
  numerics::Tensor ff_in, ff_in_bias;    // [d x d_ff], [d_ff]
  numerics::Tensor ff_out, ff_out_bias;  // [d_ff x d], [d]
  // Learned bias added to attention logits, [heads x (L + R + 1)], indexed
  // by clipped distance t - i.
  numerics::Tensor position_bias;
  // Expire mode only. Shared by every head of the layer.
  std::optional<expire::SpanPredictor> span_predictor;
};

// Per-stream cache: one bank per layer plus the absolute time of the next
// token.
struct StreamState {
  std::vector<expire::MemoryBank> banks;
  int64_t next_position = 0;
};

struct BlockOptions {
  bool training = false;
  // When false, dead memories stay cached (bounded only by L + R). Outputs
  // do not change; only the work does.
  bool prune = true;
  // Random-shorten distance l: attention beyond t - i > l is zeroed.
  std::optional<double> shorten_length;
  // Caps newly predicted spans (inference-time span reduction).
  std::optional<double> max_span_override;
  // Expire mode: every mask set to 1 within distance L + R.
  bool force_unit_mask = false;
  // Keep masks and attention weights in the result.
  bool capture = false;
  double alpha = 0.0;
};

struct LayerCapture {
  numerics::Tensor mask;        // [n x M], shared by all heads
  std::vector<int64_t> births;  // birth time of each of the M columns
  std::vector<numerics::Tensor> attention;  // per head, [n x M]
  int64_t bank_size = 0;                    // after the block-start prune
};

struct BlockStats {
  // Sum over layers and queries of |C_t| (bank after prune + in-block
  // positions up to t), and the number of (layer, query) pairs.
  double resident_sum = 0.0;
  int64_t resident_count = 0;
  // Largest bank size seen in the block, in-block entries included.
  int64_t peak = 0;
  // Bank sizes right after the block-start prune, one per layer.
  std::vector<int64_t> bank_at_start;
  double span_sum = 0.0;
  int64_t span_count = 0;
  int64_t in_ramp = 0;
};

struct BlockResult {
  numerics::Tensor logits;     // [n x vocab]
  numerics::Tensor span_loss;  // scalar, summed over layers
  BlockStats stats;
  std::vector<LayerCapture> captures;
  // Spans assigned to the new entries, per layer (expire mode).
  std::vector<std::vector<double>> new_spans;
};

using NamedTensor = std::pair<std::string, numerics::Tensor>;

class Model {
 public:
  Model(ModelConfig config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  StreamState new_stream() const;

  // Prunes the banks for the block start, runs the block (1 <= n <= K
  // tokens) and appends the new entries to the banks.
  BlockResult forward_block(StreamState& state, std::span<const int> tokens,
                            const BlockOptions& options);

  // Cuts the banks off from the current graph; values are unchanged.
  void detach_boundary(StreamState& state) const;

  // Every trainable tensor, in a stable order with stable names.
  std::vector<NamedTensor> parameters() const;

  const numerics::Tensor& token_embedding() const { return embedding_; }
  const std::vector<DecoderLayer>& layers() const { return layers_; }
  std::vector<DecoderLayer>& mutable_layers() { return layers_; }
  const numerics::Tensor& final_gain() const { return lnf_gain_; }
  const numerics::Tensor& final_bias() const { return lnf_bias_; }
  const numerics::Tensor& output_weight() const { return out_weight_; }
  const numerics::Tensor& output_bias() const { return out_bias_; }

  numerics::Rng& dropout_rng() { return dropout_rng_; }

 private:
  void prune_for_block(StreamState& state, const BlockOptions& options) const;

  ModelConfig config_;
  numerics::Tensor embedding_;  // [V x d]
  std::vector<DecoderLayer> layers_;
  numerics::Tensor lnf_gain_, lnf_bias_;
  numerics::Tensor out_weight_, out_bias_;  // [d x V], [V]
  numerics::Rng dropout_rng_;
};

// Copies the values of every parameter whose name and shape match in
// `to`; returns how many tensors were copied.
std::size_t copy_parameters(const Model& from, Model& to);

// Clipped relative distances t - i in [0, max_distance] for the queries of a
// block of `block_tokens` starting at `block_start`, against the bank
// entries followed by the block itself. Row-major [block_tokens x M].
std::vector<int64_t> attention_positions(const expire::MemoryBank& bank, int64_t block_start,
                                         int64_t block_tokens, int64_t max_distance);

}  // namespace xspan::model

#endif  // XSPAN_MODEL_DECODER_H_
