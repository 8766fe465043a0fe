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

#include "xspan/cli/run_config.h"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xspan/errors.h"

namespace xspan::cli {

using nlohmann::json;

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy:
      return "copy";
    case TaskKind::kCollision:
      return "collision";
    case TaskKind::kCollisionEasy:
      return "collision_easy";
    case TaskKind::kCharLm:
      return "char_lm";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  for (TaskKind k : {TaskKind::kCopy, TaskKind::kCollision, TaskKind::kCollisionEasy,
                     TaskKind::kCharLm}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown task '" + name + "' (expected copy, collision, collision_easy or char_lm)");
}

namespace {

// Reads fields out of a JSON object, remembering which keys were consumed.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& defaulted,
         std::vector<std::string>& unknown)
      : obj_(obj), prefix_(std::move(prefix)), defaulted_(defaulted), unknown_(unknown) {}

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    const json* v = lookup(key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + prefix_ + key + "' has the wrong type");
    }
  }

  void field(const char* key, std::optional<int64_t>& out) {
    seen_.insert(key);
    const json* v = lookup(key);
    if (!v) return;
    if (v->is_null()) {
      out.reset();
    } else if (v->is_number_integer()) {
      out = v->get<int64_t>();
    } else {
      throw ConfigError("config key '" + prefix_ + key + "' must be an integer or null");
    }
  }

  void field(const char* key, TaskKind& out) {
    std::string name = to_string(out);
    field(key, name);
    out = parse_task_kind(name);
  }

  void field(const char* key, model::AttentionMode& out) {
    std::string name = model::to_string(out);
    field(key, name);
    out = model::parse_attention_mode(name);
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    const json* v = lookup(key);
    if (v && !v->is_object()) throw ConfigError("config key '" + prefix_ + key + "' must be an object");
    Reader sub(v ? *v : kEmpty, prefix_ + key + ".", defaulted_, unknown_);
    fn(sub);
    sub.finish();
  }

  void finish() {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) unknown_.push_back(prefix_ + key);
    }
  }

 private:
  const json* lookup(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      defaulted_.push_back(prefix_ + key);
      return nullptr;
    }
    return &*it;
  }

  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& defaulted_;
  std::vector<std::string>& unknown_;
  std::set<std::string> seen_;
};

// Writes every field into a JSON object.
class Writer {
 public:
  explicit Writer(json& obj) : obj_(obj) {}

  template <typename T>
  void field(const char* key, T& value) {
    obj_[key] = value;
  }
  void field(const char* key, std::optional<int64_t>& value) {
    obj_[key] = value ? json(*value) : json(nullptr);
  }
  void field(const char* key, TaskKind& value) { obj_[key] = to_string(value); }
  void field(const char* key, model::AttentionMode& value) { obj_[key] = model::to_string(value); }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    json sub = json::object();
    Writer w(sub);
    fn(w);
    obj_[key] = sub;
  }

 private:
  json& obj_;
};

// The schema: one place lists every key for both reading and writing.
template <typename V>
void visit(V& v, RunConfig& c) {
  v.field("task", c.task);
  v.field("seed", c.seed);
  v.field("run_dir", c.run_dir);
  v.section("model", [&c](auto& s) {
    model::ModelConfig& m = c.model;
    s.field("n_layers", m.n_layers);
    s.field("d_model", m.d_model);
    s.field("n_heads", m.n_heads);
    s.field("d_ff", m.d_ff);
    s.field("block_size", m.block_size);
    s.field("max_span", m.max_span);
    s.field("ramp", m.ramp);
    s.field("mode", m.mode);
    s.field("fixed_span_length", m.fixed_span_length);
    s.field("dropout", m.dropout);
    s.field("scaled_variant", m.scaled_variant);
    s.field("recency_bias_init", m.recency_bias_init);
  });
  v.section("train", [&c](auto& s) {
    train::TrainConfig& t = c.train;
    s.field("alpha", t.alpha);
    s.field("learning_rate", t.learning_rate);
    s.field("warmup_steps", t.warmup_steps);
    s.field("total_steps", t.total_steps);
    s.field("clip_norm", t.clip_norm);
    s.field("batch_size", t.batch_size);
    s.field("random_shorten", t.random_shorten);
    s.field("eval_interval", t.eval_interval);
    s.field("timing_window", t.timing_window);
    s.field("adam_beta1", t.adam.beta1);
    s.field("adam_beta2", t.adam.beta2);
    s.field("adam_epsilon", t.adam.epsilon);
  });
  v.section("copy", [&c](auto& s) {
    s.field("distance", c.copy.distance);
    s.field("min_count", c.copy.min_count);
    s.field("max_count", c.copy.max_count);
    s.field("eval_samples", c.copy_eval_samples);
  });
  v.section("collision", [&c](auto& s) {
    tasks::CollisionConfig& k = c.collision;
    s.field("grid_size", k.grid_size);
    s.field("n_particles", k.n_particles);
    s.field("n_colors", k.n_colors);
    s.field("color_change_prob", k.color_change_prob);
    s.field("matched_query_rate", k.matched_query_rate);
    s.field("episode_steps", k.episode_steps);
    s.field("question_interval", k.question_interval);
    s.field("mapping_question_rate", k.mapping_question_rate);
    s.field("max_velocity_retries", k.max_velocity_retries);
    s.field("eval_episodes", c.collision_eval_episodes);
  });
  v.section("char_lm", [&c](auto& s) {
    s.field("path", c.char_lm.path);
    s.field("segment_length", c.char_lm.segment_length);
  });
}

// Derived fields that are not part of the schema.
void sync(RunConfig& c) {
  c.train.seed = c.seed;
  c.collision.seed = c.seed;
  c.collision.easy_mode = c.task == TaskKind::kCollisionEasy;
}

}  // namespace

void RunConfig::validate() const {
  model::ModelConfig m = model;
  if (m.vocab_size < 1) m.vocab_size = 1;  // filled in from the task later
  m.validate();
  train.validate();
  if (run_dir.empty()) throw ConfigError("run_dir must not be empty");
  switch (task) {
    case TaskKind::kCopy:
      copy.validate();
      if (copy_eval_samples < 1) throw ConfigError("copy.eval_samples must be >= 1");
      break;
    case TaskKind::kCollision:
    case TaskKind::kCollisionEasy:
      collision.validate();
      if (collision_eval_episodes < 1) throw ConfigError("collision.eval_episodes must be >= 1");
      break;
    case TaskKind::kCharLm:
      if (char_lm.path.empty()) throw ConfigError("char_lm.path is required for the char_lm task");
      if (char_lm.segment_length < 1) throw ConfigError("char_lm.segment_length must be >= 1");
      break;
  }
}

ParsedConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ParsedConfig out;
  std::vector<std::string> unknown;
  Reader reader(doc, "", out.defaulted, unknown);
  visit(reader, out.config);
  reader.finish();
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  // Defaults of sections the chosen task never reads are not worth reporting.
  const auto irrelevant = [&task = out.config.task](const std::string& key) {
    const std::string head = key.substr(0, key.find('.'));
    if (head == "copy") return task != TaskKind::kCopy;
    if (head == "collision") return task != TaskKind::kCollision && task != TaskKind::kCollisionEasy;
    if (head == "char_lm") return task != TaskKind::kCharLm;
    return false;
  };
  std::erase_if(out.defaulted, irrelevant);
  sync(out.config);
  out.config.validate();
  return out;
}

ParsedConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& config) {
  RunConfig copy = config;
  json doc = json::object();
  Writer writer(doc);
  visit(writer, copy);
  return doc.dump(2);
}

std::string default_config_json() { return run_config_to_json(RunConfig{}); }

std::unique_ptr<tasks::TaskStream> make_task(RunConfig& config) {
  sync(config);
  std::unique_ptr<tasks::TaskStream> task;
  switch (config.task) {
    case TaskKind::kCopy:
      task = std::make_unique<tasks::CopyStream>(config.copy, config.seed, config.copy_eval_samples);
      break;
    case TaskKind::kCollision:
    case TaskKind::kCollisionEasy:
      task = std::make_unique<tasks::CollisionStream>(config.collision, config.seed,
                                                      config.collision_eval_episodes);
      break;
    case TaskKind::kCharLm: {
      auto corpus = std::make_shared<const tasks::CharCorpus>(
          tasks::CharCorpus::load(config.char_lm.path));
      task = std::make_unique<tasks::CharLmStream>(corpus, config.char_lm.segment_length,
                                                   config.train.batch_size);
      break;
    }
  }
  config.model.vocab_size = task->vocab_size();
  return task;
}

std::filesystem::path resolve_run_dir(const RunConfig& config) {
  const std::filesystem::path dir(config.run_dir);
  if (dir.is_absolute()) return dir;
  const char* root = std::getenv(kRunRootEnv);
  return (root && *root ? std::filesystem::path(root) : std::filesystem::current_path()) / dir;
}

}  // namespace xspan::cli
