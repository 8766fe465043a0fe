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

#include "xspan/model/decoder.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xspan/errors.h"
#include "xspan/numerics/ops.h"

namespace xspan::model {

using numerics::RowRef;
using numerics::Shape;
using numerics::Tensor;

namespace {

Tensor param(Shape shape, double fill) {
  Tensor t(std::move(shape), fill);
  t.set_requires_grad();
  return t;
}

// Glorot-uniform matrix.
Tensor glorot(numerics::Rng& rng, int64_t rows, int64_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> values(static_cast<size_t>(rows * cols));
  for (double& v : values) v = rng.uniform(-limit, limit);
  Tensor t(Shape{rows, cols}, std::move(values));
  t.set_requires_grad();
  return t;
}

}  // namespace

Model::Model(ModelConfig config, uint64_t seed)
    : config_(std::move(config)), dropout_rng_(numerics::Rng::derive(seed, 1)) {
  config_.validate();
  numerics::Rng init(numerics::Rng::derive(seed, 0));
  const int64_t d = config_.d_model;
  const int64_t f = config_.d_ff;
  const int64_t vocab = config_.vocab_size;
  embedding_ = glorot(init, vocab, d);
  layers_.resize(static_cast<size_t>(config_.n_layers));
  for (DecoderLayer& layer : layers_) {
    layer.ln1_gain = param(Shape{d}, 1.0);
    layer.ln1_bias = param(Shape{d}, 0.0);
    layer.w_query = glorot(init, d, d);
    layer.w_key = glorot(init, d, d);
    layer.w_value = glorot(init, d, d);
    layer.w_out = glorot(init, d, d);
    layer.ln2_gain = param(Shape{d}, 1.0);
    layer.ln2_bias = param(Shape{d}, 0.0);
    layer.ff_in = glorot(init, d, f);
    layer.ff_in_bias = param(Shape{f}, 0.0);
    layer.ff_out = glorot(init, f, d);
    layer.ff_out_bias = param(Shape{d}, 0.0);
    layer.position_bias = param(Shape{config_.n_heads, config_.position_buckets()}, 0.0);
    if (config_.recency_bias_init) {
      // Head h starts with slope 2^(-8(h+1)/H) per step of distance.
      const int64_t buckets = config_.position_buckets();
      const std::span<double> pb = layer.position_bias.mutable_data();
      for (int64_t h = 0; h < config_.n_heads; ++h) {
        const double slope = std::exp2(-8.0 * static_cast<double>(h + 1) / config_.n_heads);
        for (int64_t k = 0; k < buckets; ++k) pb[h * buckets + k] = -slope * static_cast<double>(k);
      }
    }
    if (config_.mode == AttentionMode::kExpireSpan) {
      expire::SpanPredictor p = expire::SpanPredictor::create(d, config_.max_span, config_.ramp,
                                                              config_.scaled_variant);
      p.weight.set_requires_grad();
      p.bias.set_requires_grad();
      layer.span_predictor = std::move(p);
    }
  }
  lnf_gain_ = param(Shape{d}, 1.0);
  lnf_bias_ = param(Shape{d}, 0.0);
  out_weight_ = glorot(init, d, vocab);
  out_bias_ = param(Shape{vocab}, 0.0);
}

StreamState Model::new_stream() const {
  StreamState state;
  for (int l = 0; l < config_.n_layers; ++l) state.banks.emplace_back(l);
  return state;
}

void Model::prune_for_block(StreamState& state, const BlockOptions& options) const {
  const int64_t t0 = state.next_position;
  const int64_t window = config_.max_distance();
  for (expire::MemoryBank& bank : state.banks) {
    if (config_.mode == AttentionMode::kFixedSpan) {
      if (!config_.fixed_span_length) continue;
      if (options.prune) {
        expire::prune_fixed(bank, t0, *config_.fixed_span_length);
      } else {
        expire::evict_beyond(bank, t0, std::max(*config_.fixed_span_length, window));
      }
    } else if (options.force_unit_mask || !options.prune) {
      expire::evict_beyond(bank, t0, window);
    } else {
      expire::prune(bank, t0, static_cast<double>(config_.ramp));
    }
  }
}

std::vector<int64_t> attention_positions(const expire::MemoryBank& bank, int64_t block_start,
                                         int64_t block_tokens, int64_t max_distance) {
  const auto bank_size = static_cast<int64_t>(bank.size());
  const int64_t cols = bank_size + block_tokens;
  std::vector<int64_t> out(static_cast<size_t>(block_tokens * cols));
  for (int64_t t = 0; t < block_tokens; ++t) {
    for (int64_t j = 0; j < cols; ++j) {
      const int64_t birth = j < bank_size ? bank.entries()[j].birth_time : block_start + j - bank_size;
      out[t * cols + j] = std::clamp<int64_t>(block_start + t - birth, 0, max_distance);
    }
  }
  return out;
}

BlockResult Model::forward_block(StreamState& state, std::span<const int> tokens,
                                 const BlockOptions& options) {
  const auto n = static_cast<int64_t>(tokens.size());
  if (n < 1 || n > config_.block_size) {
    throw numerics::DimensionError("forward_block: got " + std::to_string(n) +
                                   " tokens, block size is " + std::to_string(config_.block_size));
  }
  if (state.banks.size() != layers_.size()) {
    throw std::invalid_argument("forward_block: stream has the wrong number of banks");
  }
  if (options.alpha < 0.0) throw ConfigError("span loss coefficient alpha must be >= 0");
  prune_for_block(state, options);

  const int64_t t0 = state.next_position;
  const bool expire_mode = config_.mode == AttentionMode::kExpireSpan;
  const bool learned_mask = expire_mode && !options.force_unit_mask;
  const double ramp = static_cast<double>(config_.ramp);
  const int64_t heads = config_.n_heads;
  const int64_t dh = config_.head_dim();
  const int64_t buckets = config_.position_buckets();
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  BlockResult result;
  result.new_spans.resize(layers_.size());
  if (options.capture) result.captures.resize(layers_.size());
  BlockStats& stats = result.stats;

  Tensor x = numerics::dropout(numerics::embedding(embedding_, tokens), config_.dropout,
                               dropout_rng_, options.training);
  Tensor span_loss = Tensor::scalar(0.0);

  for (size_t l = 0; l < layers_.size(); ++l) {
    const DecoderLayer& layer = layers_[l];
    expire::MemoryBank& bank = state.banks[l];
    const auto bank_size = static_cast<int64_t>(bank.size());
    const int64_t cols = bank_size + n;

    Tensor h = numerics::layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    Tensor q = numerics::matmul(h, layer.w_query);
    Tensor k = numerics::matmul(h, layer.w_key);
    Tensor v = numerics::matmul(h, layer.w_value);

    Tensor spans_new;
    if (expire_mode) {
      spans_new = expire::predict_span(*layer.span_predictor, h);
      if (options.max_span_override) {
        std::vector<double> capped(spans_new.data().begin(), spans_new.data().end());
        for (double& e : capped) e = std::min(e, *options.max_span_override);
        spans_new = Tensor(Shape{n}, std::move(capped));
      }
      result.new_spans[l].assign(spans_new.data().begin(), spans_new.data().end());
    }

    std::vector<int64_t> births(static_cast<size_t>(cols));
    for (int64_t j = 0; j < bank_size; ++j) births[j] = bank.entries()[j].birth_time;
    for (int64_t j = 0; j < n; ++j) births[bank_size + j] = t0 + j;

    std::vector<double> distance(static_cast<size_t>(n * cols));
    std::vector<double> allowed(distance.size());
    for (int64_t t = 0; t < n; ++t) {
      for (int64_t j = 0; j < cols; ++j) {
        const int64_t dist = t0 + t - births[j];
        bool ok = dist >= 0;
        if (config_.mode == AttentionMode::kFixedSpan && config_.fixed_span_length) {
          ok = ok && dist <= *config_.fixed_span_length;
        }
        if (expire_mode && options.force_unit_mask) ok = ok && dist <= config_.max_distance();
        if (options.shorten_length) ok = ok && static_cast<double>(dist) <= *options.shorten_length;
        distance[t * cols + j] = static_cast<double>(dist);
        allowed[t * cols + j] = ok ? 1.0 : 0.0;
      }
    }

    Tensor mask;
    if (learned_mask) {
      std::vector<RowRef> span_refs;
      span_refs.reserve(static_cast<size_t>(cols));
      for (const expire::MemoryEntry& e : bank.entries()) span_refs.push_back(e.span);
      for (int64_t j = 0; j < n; ++j) span_refs.push_back(RowRef{spans_new, j});
      const Tensor spans_all = numerics::gather_elements(span_refs);
      const Tensor arg = expire::ramp_argument_grid(spans_all, distance, n, ramp);
      mask = numerics::mul(numerics::clamp01ramp(arg), Tensor(Shape{n, cols}, allowed));

      // Memories inside the ramp for some query of this block, each once.
      std::vector<RowRef> in_ramp;
      const auto a = arg.data();
      for (int64_t j = 0; j < cols; ++j) {
        for (int64_t t = 0; t < n; ++t) {
          const double xv = a[t * cols + j];
          if (distance[t * cols + j] >= 0.0 && xv > 0.0 && xv < 1.0) {
            in_ramp.push_back(span_refs[j]);
            break;
          }
        }
      }
      stats.in_ramp += static_cast<int64_t>(in_ramp.size());
      if (!in_ramp.empty()) {
        span_loss = numerics::add(
            span_loss,
            expire::aux_span_loss(numerics::gather_elements(in_ramp), options.alpha, n));
      }
    } else {
      mask = Tensor(Shape{n, cols}, allowed);
    }

    std::vector<RowRef> key_refs, value_refs;
    key_refs.reserve(static_cast<size_t>(cols));
    value_refs.reserve(static_cast<size_t>(cols));
    for (const expire::MemoryEntry& e : bank.entries()) {
      key_refs.push_back(e.key);
      value_refs.push_back(e.value);
    }
    for (int64_t j = 0; j < n; ++j) {
      key_refs.push_back(RowRef{k, j});
      value_refs.push_back(RowRef{v, j});
    }
    const Tensor keys = numerics::gather_rows(key_refs);
    const Tensor values = numerics::gather_rows(value_refs);

    const std::vector<int64_t> positions =
        attention_positions(bank, t0, n, config_.max_distance());
    std::vector<int64_t> index(positions.size());
    std::vector<Tensor> head_out;
    head_out.reserve(static_cast<size_t>(heads));
    if (options.capture) {
      result.captures[l].mask = mask;
      result.captures[l].births = births;
      result.captures[l].bank_size = bank_size;
    }
    for (int64_t hd = 0; hd < heads; ++hd) {
      for (size_t i = 0; i < positions.size(); ++i) index[i] = hd * buckets + positions[i];
      const Tensor bias = numerics::gather_table(layer.position_bias, index, Shape{n, cols});
      const Tensor qh = numerics::slice_cols(q, hd * dh, dh);
      const Tensor kh = numerics::slice_cols(keys, hd * dh, dh);
      const Tensor vh = numerics::slice_cols(values, hd * dh, dh);
      const Tensor scores =
          numerics::add(numerics::scale(numerics::matmul_nt(qh, kh), score_scale), bias);
      const Tensor p = numerics::masked_softmax(scores, mask);
      if (options.capture) result.captures[l].attention.push_back(p);
      head_out.push_back(numerics::matmul(p, vh));
    }
    const Tensor attended = heads == 1 ? head_out[0] : numerics::concat_cols(head_out);
    x = numerics::add(x, numerics::dropout(numerics::matmul(attended, layer.w_out),
                                           config_.dropout, dropout_rng_, options.training));

    const Tensor h2 = numerics::layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    Tensor ff = numerics::gelu(
        numerics::add_row_vector(numerics::matmul(h2, layer.ff_in), layer.ff_in_bias));
    ff = numerics::add_row_vector(numerics::matmul(ff, layer.ff_out), layer.ff_out_bias);
    x = numerics::add(x, numerics::dropout(ff, config_.dropout, dropout_rng_, options.training));

    for (int64_t j = 0; j < n; ++j) {
      expire::MemoryEntry entry;
      entry.hidden = RowRef{h, j};
      entry.key = RowRef{k, j};
      entry.value = RowRef{v, j};
      entry.birth_time = t0 + j;
      if (expire_mode) entry.span = RowRef{spans_new, j};
      bank.append(std::move(entry));
    }

    stats.bank_at_start.push_back(bank_size);
    stats.resident_sum += static_cast<double>(n * bank_size) + static_cast<double>(n * (n + 1)) / 2.0;
    stats.resident_count += n;
    stats.peak = std::max(stats.peak, bank_size + n);
    for (double e : result.new_spans[l]) stats.span_sum += e;
    stats.span_count += static_cast<int64_t>(result.new_spans[l].size());
  }

  const Tensor hf = numerics::layer_norm(x, lnf_gain_, lnf_bias_);
  result.logits = numerics::add_row_vector(numerics::matmul(hf, out_weight_), out_bias_);
  result.span_loss = span_loss;
  state.next_position += n;
  return result;
}

void Model::detach_boundary(StreamState& state) const {
  for (expire::MemoryBank& bank : state.banks) bank.detach();
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("embedding", embedding_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const DecoderLayer& layer = layers_[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.gain", layer.ln1_gain);
    out.emplace_back(p + "ln1.bias", layer.ln1_bias);
    out.emplace_back(p + "attn.query", layer.w_query);
    out.emplace_back(p + "attn.key", layer.w_key);
    out.emplace_back(p + "attn.value", layer.w_value);
    out.emplace_back(p + "attn.out", layer.w_out);
    out.emplace_back(p + "attn.position_bias", layer.position_bias);
    out.emplace_back(p + "ln2.gain", layer.ln2_gain);
    out.emplace_back(p + "ln2.bias", layer.ln2_bias);
    out.emplace_back(p + "ff.in", layer.ff_in);
    out.emplace_back(p + "ff.in_bias", layer.ff_in_bias);
    out.emplace_back(p + "ff.out", layer.ff_out);
    out.emplace_back(p + "ff.out_bias", layer.ff_out_bias);
    if (layer.span_predictor) {
      out.emplace_back(p + "span.weight", layer.span_predictor->weight);
      out.emplace_back(p + "span.bias", layer.span_predictor->bias);
    }
  }
  out.emplace_back("final_norm.gain", lnf_gain_);
  out.emplace_back("final_norm.bias", lnf_bias_);
  out.emplace_back("output.weight", out_weight_);
  out.emplace_back("output.bias", out_bias_);
  return out;
}

std::size_t copy_parameters(const Model& from, Model& to) {
  std::size_t copied = 0;
  const std::vector<NamedTensor> source = from.parameters();
  for (auto& [name, dst] : to.parameters()) {
    for (const auto& [src_name, src] : source) {
      if (src_name != name || src.shape() != dst.shape()) continue;
      Tensor target = dst;
      std::copy(src.data().begin(), src.data().end(), target.mutable_data().begin());
      ++copied;
      break;
    }
  }
  return copied;
}

}  // namespace xspan::model
