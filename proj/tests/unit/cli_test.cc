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


#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "test_util.h"
#include "xspan/cli/checkpoint.h"
#include "xspan/cli/commands.h"
#include "xspan/cli/run_config.h"
#include "xspan/errors.h"
#include "xspan/train/optimizer.h"

namespace xspan::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("xspan_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

json tiny_run(const fs::path& run_dir, const std::string& mode = "expire_span") {
  json j;
  j["task"] = "copy";
  j["seed"] = 11;
  j["run_dir"] = run_dir.string();
  j["model"] = {{"n_layers", 2}, {"d_model", 8},    {"n_heads", 2},     {"d_ff", 16},
                {"block_size", 4}, {"max_span", 16}, {"ramp", 4},        {"mode", mode},
                {"dropout", 0.1}};
  if (mode == "fixed_span") j["model"]["fixed_span_length"] = 8;
  j["train"] = {{"alpha", 1e-4},       {"learning_rate", 1e-2}, {"warmup_steps", 2},
                {"total_steps", 6},    {"batch_size", 2},       {"eval_interval", 3},
                {"random_shorten", true}};
  j["copy"] = {{"distance", 6}, {"max_count", 3}, {"eval_samples", 4}};
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config_in.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

// metrics.csv with the wall-clock column blanked.
std::vector<std::string> metric_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() > 7) cells[7] = "-";
    std::string joined;
    for (size_t i = 0; i < cells.size(); ++i) joined += (i ? "," : "") + cells[i];
    rows.push_back(joined);
  }
  return rows;
}

int train_quietly(const fs::path& config, bool resume = false) {
  std::ostringstream log;
  return cmd_train(config, resume, log);
}

TEST(RunConfigTest, UnknownKeysAreListed) {
  try {
    parse_run_config(R"({"task": "copy", "modle": {}, "train": {"lr": 1}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("modle"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.lr"), std::string::npos) << msg;
  }
}

TEST(RunConfigTest, DefaultsAreReportedForRelevantSections) {
  const ParsedConfig p = parse_run_config(R"({"task": "copy", "copy": {"distance": 40}})");
  const auto& d = p.defaulted;
  auto has = [&d](const std::string& k) { return std::find(d.begin(), d.end(), k) != d.end(); };
  EXPECT_TRUE(has("seed"));
  EXPECT_TRUE(has("model.d_model"));
  EXPECT_TRUE(has("copy.max_count"));
  EXPECT_FALSE(has("copy.distance"));
  for (const std::string& k : d) {
    EXPECT_NE(k.rfind("collision", 0), 0u) << k;
    EXPECT_NE(k.rfind("char_lm", 0), 0u) << k;
  }
  EXPECT_EQ(p.config.copy.distance, 40);
}

TEST(RunConfigTest, RejectsBadValues) {
  EXPECT_THROW(parse_run_config(R"({"task": "sorting"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"mode": "window"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"d_model": "big"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"d_model": 10, "n_heads": 3}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": 3})"), ConfigError);
  EXPECT_THROW(parse_run_config("{"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"task": "char_lm"})"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(RunConfigTest, EchoParsesBackToItself) {
  const std::string text = tiny_run("/tmp/x").dump();
  const RunConfig a = parse_run_config(text).config;
  const std::string echo = run_config_to_json(a);
  const ParsedConfig b = parse_run_config(echo);
  EXPECT_EQ(run_config_to_json(b.config), echo);
  EXPECT_TRUE(b.defaulted.empty());
  EXPECT_EQ(parse_run_config(default_config_json()).defaulted.size(), 0u);
}

TEST(RunConfigTest, RunDirHonorsEnvironmentRoot) {
  RunConfig c;
  c.run_dir = "abc";
  ::setenv(kRunRootEnv, "/tmp/root_for_test", 1);
  EXPECT_EQ(resolve_run_dir(c), fs::path("/tmp/root_for_test/abc"));
  c.run_dir = "/elsewhere/abc";
  EXPECT_EQ(resolve_run_dir(c), fs::path("/elsewhere/abc"));
  ::unsetenv(kRunRootEnv);
  c.run_dir = "abc";
  EXPECT_EQ(resolve_run_dir(c), fs::current_path() / "abc");
}

TEST(CheckpointTest, RoundTripIsBitIdentical) {
  TempDir tmp;
  numerics::Rng rng(3);
  model::Model a(testing::tiny_config(), 1);
  testing::perturb_model(a, rng, -1.0, 1.0);
  std::vector<numerics::Tensor> params;
  for (const auto& [n, t] : a.parameters()) params.push_back(t);
  train::OptimState st = train::make_optim_state(params);
  for (auto& m : st.first_moment) {
    for (double& x : m) x = rng.normal();
  }
  for (auto& v : st.second_moment) {
    for (double& x : v) x = rng.uniform(0.0, 1.0);
  }
  st.step = 17;
  st.skipped_steps = 2;
  const fs::path p = checkpoint_path(tmp.path(), 17);
  write_checkpoint(p, make_checkpoint(a, &st, 17, "{\"k\": 1}"));

  const Checkpoint c = read_checkpoint(p);
  EXPECT_EQ(c.step, 17);
  EXPECT_EQ(c.config_json, "{\"k\": 1}");
  model::Model b(testing::tiny_config(), 99);
  train::OptimState st2 = train::make_optim_state(params);
  restore_checkpoint(c, b, &st2);
  EXPECT_EQ(st2.step, 17);
  EXPECT_EQ(st2.skipped_steps, 2);
  EXPECT_EQ(st2.first_moment, st.first_moment);
  EXPECT_EQ(st2.second_moment, st.second_moment);

  const auto tokens = testing::random_tokens(rng, 21, 6);
  EXPECT_TRUE(testing::bit_equal(testing::stream_logits(a, tokens), testing::stream_logits(b, tokens)));
}

TEST(CheckpointTest, TruncatedFileIsRejected) {
  TempDir tmp;
  model::Model a(testing::tiny_config(), 1);
  const fs::path p = tmp.path() / "c.xsck";
  write_checkpoint(p, make_checkpoint(a, nullptr, 1, "{}"));
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 9);
  EXPECT_THROW(read_checkpoint(p), std::runtime_error);
  std::ofstream(p, std::ios::trunc) << "not a checkpoint";
  EXPECT_THROW(read_checkpoint(p), std::runtime_error);
  EXPECT_THROW(read_checkpoint(tmp.path() / "missing.xsck"), std::runtime_error);
}

TEST(CheckpointTest, ShapeMismatchIsRejected) {
  TempDir tmp;
  model::Model a(testing::tiny_config(), 1);
  const fs::path p = tmp.path() / "c.xsck";
  write_checkpoint(p, make_checkpoint(a, nullptr, 1, "{}"));
  model::Model b(testing::tiny_config(9), 1);
  EXPECT_THROW(restore_checkpoint(read_checkpoint(p), b, nullptr), std::runtime_error);
}

TEST(CheckpointTest, ListingAndPruning) {
  TempDir tmp;
  model::Model a(testing::tiny_config(), 1);
  for (int64_t s : {30, 10, 20}) write_checkpoint(checkpoint_path(tmp.path(), s), make_checkpoint(a, nullptr, s, "{}"));
  std::ofstream(tmp.path() / "notes.txt") << "x";
  auto list = list_checkpoints(tmp.path());
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list.back(), checkpoint_path(tmp.path(), 30));
  prune_checkpoints(tmp.path(), 2);
  list = list_checkpoints(tmp.path());
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list.front(), checkpoint_path(tmp.path(), 20));
  EXPECT_TRUE(fs::exists(tmp.path() / "notes.txt"));
}

TEST(TrainCommandTest, SameConfigSameMetrics) {
  TempDir tmp;
  ASSERT_EQ(train_quietly(write_config(tmp.path(), tiny_run(tmp.path() / "a"))), kExitOk);
  ASSERT_EQ(train_quietly(write_config(tmp.path(), tiny_run(tmp.path() / "b"))), kExitOk);
  const auto a = metric_rows(tmp.path() / "a" / "metrics.csv");
  const auto b = metric_rows(tmp.path() / "b" / "metrics.csv");
  ASSERT_EQ(a.size(), 3u);  // header, step 3, step 6
  EXPECT_EQ(a, b);
  const Checkpoint ca = read_checkpoint(checkpoint_path(tmp.path() / "a", 6));
  const Checkpoint cb = read_checkpoint(checkpoint_path(tmp.path() / "b", 6));
  ASSERT_EQ(ca.arrays.size(), cb.arrays.size());
  for (size_t i = 0; i < ca.arrays.size(); ++i) EXPECT_EQ(ca.arrays[i].values, cb.arrays[i].values);
  EXPECT_TRUE(fs::exists(tmp.path() / "a" / "config.json"));
}

TEST(TrainCommandTest, RefusesNonEmptyRunDirectory) {
  TempDir tmp;
  const fs::path cfg = write_config(tmp.path(), tiny_run(tmp.path() / "a"));
  ASSERT_EQ(train_quietly(cfg), kExitOk);
  EXPECT_THROW(train_quietly(cfg), ConfigError);
  const fs::path other = write_config(tmp.path(), tiny_run(tmp.path() / "empty"));
  EXPECT_THROW(train_quietly(other, true), ConfigError);
}

TEST(TrainCommandTest, ResumeContinuesFromTheNewestCheckpoint) {
  TempDir tmp;
  const fs::path cfg = write_config(tmp.path(), tiny_run(tmp.path() / "a"));
  ASSERT_EQ(train_quietly(cfg), kExitOk);
  const auto full = metric_rows(tmp.path() / "a" / "metrics.csv");
  fs::remove(checkpoint_path(tmp.path() / "a", 6));
  ASSERT_EQ(train_quietly(cfg, true), kExitOk);
  const auto resumed = metric_rows(tmp.path() / "a" / "metrics.csv");
  ASSERT_EQ(resumed.size(), full.size());
  EXPECT_EQ(resumed[0], full[0]);
  EXPECT_EQ(resumed[1], full[1]);
  EXPECT_EQ(resumed[2].substr(0, 2), "6,");
  EXPECT_TRUE(fs::exists(checkpoint_path(tmp.path() / "a", 6)));
  const Checkpoint c = read_checkpoint(checkpoint_path(tmp.path() / "a", 6));
  EXPECT_EQ(c.adam_step + c.skipped_steps, 6);
}

TEST(TrainCommandTest, NumericHaltWritesDump) {
  TempDir tmp;
  json j = tiny_run(tmp.path() / "a");
  j["train"]["learning_rate"] = 1e300;
  j["train"]["clip_norm"] = 1e300;
  EXPECT_EQ(train_quietly(write_config(tmp.path(), j)), kExitNumericHalt);
  std::ifstream dump(tmp.path() / "a" / "halt_dump.json");
  ASSERT_TRUE(dump.good());
  const json d = json::parse(dump);
  EXPECT_EQ(d["layers"].size(), 2u);
}

class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new TempDir();
    for (const std::string mode : {"expire_span", "fixed_span"}) {
      const fs::path cfg = write_config(tmp_->path(), tiny_run(tmp_->path() / mode, mode));
      ASSERT_EQ(train_quietly(cfg), kExitOk);
    }
  }
  static void TearDownTestSuite() { delete tmp_; }
  static fs::path ckpt(const std::string& mode) { return checkpoint_path(tmp_->path() / mode, 6); }
  static fs::path input(const std::string& text) {
    const fs::path p = tmp_->path() / "input.txt";
    std::ofstream(p, std::ios::trunc) << text;
    return p;
  }
  static json eval(EvalRequest req, std::string* log_text = nullptr) {
    std::ostringstream out, log;
    EXPECT_EQ(cmd_eval(req, out, log), kExitOk);
    if (log_text) *log_text = log.str();
    return json::parse(out.str());
  }
  static TempDir* tmp_;
};
TempDir* TrainedRun::tmp_ = nullptr;

TEST_F(TrainedRun, EvalReportsTheRun) {
  const json j = eval({ckpt("expire_span")});
  EXPECT_EQ(j["task"], "copy");
  EXPECT_EQ(j["step"], 6);
  EXPECT_EQ(j["segments"], 4);
  EXPECT_TRUE(j["max_span_override"].is_null());
  EXPECT_GT(j["avg_span"].get<double>(), 0.0);
  EXPECT_LE(j["peak_mem"].get<double>(), 16 + 4 + 4);
}

TEST_F(TrainedRun, OverrideAtTheTrainedMaximumChangesNothing) {
  const json base = eval({ckpt("expire_span")});
  EvalRequest req{ckpt("expire_span")};
  req.max_span_override = 16;
  const json capped = eval(req);
  EXPECT_EQ(capped["task_loss"], base["task_loss"]);
  EXPECT_EQ(capped["accuracy"], base["accuracy"]);
  req.max_span_override = 1000;
  std::string log;
  const json clamped = eval(req, &log);
  EXPECT_NE(log.find("clamped"), std::string::npos);
  EXPECT_EQ(clamped["task_loss"], base["task_loss"]);
  req.max_span_override = 1;
  EXPECT_LE(eval(req)["avg_mem"].get<double>(), base["avg_mem"].get<double>());
}

TEST_F(TrainedRun, NoPruneKeepsMetrics) {
  const json base = eval({ckpt("expire_span")});
  EvalRequest req{ckpt("expire_span")};
  req.prune = false;
  const json kept = eval(req);
  EXPECT_EQ(kept["task_loss"], base["task_loss"]);
  EXPECT_GE(kept["avg_mem"].get<double>(), base["avg_mem"].get<double>());
}

TEST_F(TrainedRun, OverrideOnFixedSpanIsIgnoredWithAWarning) {
  const json base = eval({ckpt("fixed_span")});
  EvalRequest req{ckpt("fixed_span")};
  req.max_span_override = 2;
  std::string log;
  const json j = eval(req, &log);
  EXPECT_NE(log.find("warning"), std::string::npos);
  EXPECT_EQ(j["task_loss"], base["task_loss"]);
  EXPECT_TRUE(j["max_span_override"].is_null());
  EXPECT_TRUE(j["avg_span"].is_null());
}

TEST_F(TrainedRun, AnalyzeWritesOneRowPerLayerAndToken) {
  std::ostringstream out, log;
  ASSERT_EQ(cmd_analyze(ckpt("expire_span"), input("0 1 1 1 2 3 3\n"), out, log), kExitOk);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "layer,position,token,span");
  int rows = 0;
  while (std::getline(in, line)) {
    const int layer = rows / 7, pos = rows % 7;
    EXPECT_EQ(line.rfind(std::to_string(layer) + "," + std::to_string(pos) + ",", 0), 0u) << line;
    const double span = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(span, 0.0);
    EXPECT_LE(span, 16.0);
    ++rows;
  }
  EXPECT_EQ(rows, 2 * 7);
}

TEST_F(TrainedRun, AnalyzeRejectsBadInput) {
  std::ostringstream out, log;
  EXPECT_THROW(cmd_analyze(ckpt("expire_span"), input("0 9"), out, log), ConfigError);
  EXPECT_THROW(cmd_analyze(ckpt("expire_span"), input("0 x"), out, log), ConfigError);
  EXPECT_THROW(cmd_analyze(ckpt("expire_span"), input(""), out, log), ConfigError);
  try {
    cmd_analyze(ckpt("fixed_span"), input("0 1"), out, log);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("no spans to analyze"), std::string::npos);
  }
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(XSPAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ExitCodes) {
  EXPECT_EQ(run_tool("selftest"), kExitOk);
  EXPECT_EQ(run_tool("selftest --inject-fault ramp-gradient"), kExitSelftestFailure);
  EXPECT_EQ(run_tool("train --config /nonexistent.json"), kExitConfigError);
  EXPECT_EQ(run_tool("frobnicate"), kExitConfigError);
  EXPECT_EQ(run_tool("--help"), kExitOk);
}

}  // namespace
}  // namespace xspan::cli
