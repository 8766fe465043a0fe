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

#ifndef XSPAN_CLI_CHECKPOINT_H_
#define XSPAN_CLI_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xspan/model/decoder.h"
#include "xspan/train/optimizer.h"

// Checkpoint file: a text header followed by a binary payload.
//
//   XSPAN-CHECKPOINT 1
//   step 1200
//   adam_step 1200
//   skipped_steps 0
//   config {...one-line JSON...}
//   array param/embedding f64 2 5 32
//   array adam_m/embedding f64 2 5 32
//   ...
//   end
//   <float64 little-endian values of every array, in header order>
namespace xspan::cli {

inline constexpr int kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  int64_t step = 0;
  int64_t adam_step = 0;
  int64_t skipped_steps = 0;
  std::string config_json;  // RunConfig echo
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

// Parameters are stored as "param/<name>", Adam moments as "adam_m/<name>"
// and "adam_v/<name>".
Checkpoint make_checkpoint(const model::Model& model, const train::OptimState* optim,
                           int64_t step, const std::string& config_json);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws std::runtime_error on a malformed or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies stored parameters (and moments, if `optim` is given) into place.
// Throws std::runtime_error if a parameter is missing or has another shape.
void restore_checkpoint(const Checkpoint& ckpt, model::Model& model, train::OptimState* optim);

// "ckpt_<step>.xsck" inside `dir`, zero padded so names sort by step.
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int64_t step);
// Checkpoints in `dir`, oldest first.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);
// Deletes all but the newest `keep`.
void prune_checkpoints(const std::filesystem::path& dir, std::size_t keep);

}  // namespace xspan::cli

#endif  // XSPAN_CLI_CHECKPOINT_H_
