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

#ifndef XSPAN_CLI_RUN_CONFIG_H_
#define XSPAN_CLI_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "xspan/model/config.h"
#include "xspan/tasks/collision.h"
#include "xspan/tasks/copy_task.h"
#include "xspan/tasks/streams.h"
#include "xspan/train/trainer.h"

namespace xspan::cli {

enum class TaskKind { kCopy, kCollision, kCollisionEasy, kCharLm };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct CharLmConfig {
  std::string path;
  int64_t segment_length = 64;
};

struct RunConfig {
  TaskKind task = TaskKind::kCopy;
  uint64_t seed = 0;
  std::string run_dir = "run";
  model::ModelConfig model;  // vocab_size is filled in from the task
  train::TrainConfig train;
  tasks::CopyConfig copy;
  int64_t copy_eval_samples = 100;
  tasks::CollisionConfig collision;
  int64_t collision_eval_episodes = 32;
  CharLmConfig char_lm;

  // Throws ConfigError on any nested violation.
  void validate() const;
};

struct ParsedConfig {
  RunConfig config;
  // Dotted paths of keys that were absent and took their default.
  std::vector<std::string> defaulted;
};

// Parses JSON text. Unknown keys raise ConfigError listing every offending
// dotted path; absent keys take defaults and are reported in `defaulted`.
ParsedConfig parse_run_config(const std::string& json_text);
ParsedConfig load_run_config(const std::filesystem::path& path);

// Full JSON echo of a config (every key present).
std::string run_config_to_json(const RunConfig& config);

// The default table as JSON, for documentation.
std::string default_config_json();

// Task stream described by the config. Also sets config.model.vocab_size.
std::unique_ptr<tasks::TaskStream> make_task(RunConfig& config);

// Environment variable that overrides the run root.
inline constexpr const char* kRunRootEnv = "XSPAN_RUN_ROOT";

// run_dir resolved against $XSPAN_RUN_ROOT (or the working directory) unless
// it is absolute.
std::filesystem::path resolve_run_dir(const RunConfig& config);

}  // namespace xspan::cli

#endif  // XSPAN_CLI_RUN_CONFIG_H_
