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


// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--group fast|copy|collision|all] [--work-dir DIR] [--cli PATH]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xspan/cli/checkpoint.h"
#include "xspan/cli/commands.h"
#include "xspan/cli/run_config.h"
#include "xspan/cli/selftest.h"
#include "xspan/metrics/metrics.h"
#include "xspan/train/trainer.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using xspan::cli::CheckResult;

struct Line {
  int id = 0;
  bool passed = false;
  std::string detail;
};

std::vector<Line> g_lines;

void report(int id, bool passed, const std::string& detail) {
  g_lines.push_back({id, passed, detail});
  std::cout << "criterion " << std::setw(2) << id << "  " << (passed ? "PASS" : "FAIL") << "  "
            << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string describe(const CheckResult& c) {
  std::ostringstream s;
  s << c.name << " measured=" << std::setprecision(3) << c.measured << " tol=" << c.tolerance
    << " (" << std::fixed << std::setprecision(2) << c.seconds << " s) " << c.detail;
  return s.str();
}

// ---- criteria 1-5, 10 ----

void run_fast(const std::string& cli) {
  {
    const CheckResult c = xspan::cli::check_mask_algebra();
    report(1, c.passed && c.seconds < 1.0, describe(c));
  }
  {
    const CheckResult c = xspan::cli::check_end_to_end_gradient();
    report(2, c.passed && c.seconds < 60.0, describe(c));
  }
  {
    const CheckResult c = xspan::cli::check_memory_size_identity();
    report(3, c.passed && c.seconds < 30.0, describe(c));
  }
  {
    const CheckResult c = xspan::cli::check_pruning_soundness();
    report(4, c.passed && c.seconds < 60.0, describe(c));
  }
  {
    const CheckResult c = xspan::cli::check_baseline_equivalence();
    report(5, c.passed, describe(c));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string cmd = cli + " selftest > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    const double secs = seconds_since(t0);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    report(10, code == 0 && secs < 300.0,
           "xspan selftest exit=" + std::to_string(code) + " in " + fmt(secs, 3) + " s");
  }
}

// ---- training helpers ----

struct TrainedRun {
  fs::path checkpoint;
  double seconds = 0.0;
};

TrainedRun train(const fs::path& work, const std::string& name, const json& config) {
  const fs::path dir = work / name;
  fs::remove_all(dir);
  fs::create_directories(work);
  json cfg = config;
  cfg["run_dir"] = dir.string();
  const fs::path cfg_path = work / (name + ".json");
  std::ofstream(cfg_path) << cfg.dump(2);
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream log;
  const int code = xspan::cli::cmd_train(cfg_path, false, log);
  TrainedRun r;
  r.seconds = seconds_since(t0);
  if (code != 0) throw std::runtime_error("training " + name + " failed:\n" + log.str());
  r.checkpoint = xspan::cli::list_checkpoints(dir).back();
  std::cerr << "  trained " << name << " in " << fmt(r.seconds, 4) << " s" << std::endl;
  return r;
}

json eval(const fs::path& ckpt, std::optional<int64_t> override_span = std::nullopt) {
  xspan::cli::EvalRequest req;
  req.checkpoint = ckpt;
  req.max_span_override = override_span;
  std::ostringstream out, log;
  if (xspan::cli::cmd_eval(req, out, log) != 0) throw std::runtime_error("eval failed: " + log.str());
  return json::parse(out.str());
}

// ---- criteria 6, 8, 9 ----

constexpr int64_t kCopyDistance = 256;
constexpr int64_t kCopySpan = 512;
constexpr int kCopyBlock = 64;
constexpr int64_t kFixedSpan = 64;
constexpr int64_t kOverride = 128;  // below D

json copy_config(int seed, bool expire) {
  json j;
  j["task"] = "copy";
  j["seed"] = seed;
  j["model"] = {{"n_layers", 2},         {"d_model", 32},        {"n_heads", 2},
                {"d_ff", 64},            {"block_size", kCopyBlock}, {"max_span", kCopySpan},
                {"ramp", 32},            {"mode", expire ? "expire_span" : "fixed_span"}};
  if (!expire) j["model"]["fixed_span_length"] = kFixedSpan;
  j["train"] = {{"alpha", 3e-5},        {"learning_rate", 1e-3}, {"warmup_steps", 100},
                {"total_steps", 5000},  {"eval_interval", 1000}, {"batch_size", 1}};
  j["copy"] = {{"distance", kCopyDistance}, {"min_count", 1}, {"max_count", 8},
               {"eval_samples", 100}};
  return j;
}

struct LoadedModel {
  std::unique_ptr<xspan::tasks::TaskStream> task;
  std::unique_ptr<xspan::model::Model> model;
};

LoadedModel load(const fs::path& ckpt) {
  const xspan::cli::Checkpoint c = xspan::cli::read_checkpoint(ckpt);
  xspan::cli::RunConfig cfg = xspan::cli::parse_run_config(c.config_json).config;
  LoadedModel m;
  m.task = xspan::cli::make_task(cfg);
  m.model = std::make_unique<xspan::model::Model>(cfg.model, cfg.seed);
  xspan::cli::restore_checkpoint(c, *m.model, nullptr);
  return m;
}

// Median wall time per evaluated segment, pruning on vs off, interleaved.
std::pair<double, double> prune_timings(const fs::path& ckpt, int64_t* peak_on, int64_t* peak_off) {
  LoadedModel m = load(ckpt);
  constexpr int64_t kSegments = 20;
  std::vector<double> on, off;
  for (int rep = 0; rep < 5; ++rep) {
    for (const bool prune : {true, false}) {
      xspan::train::EvalOptions o;
      o.prune = prune;
      o.max_segments = kSegments;
      const auto t0 = std::chrono::steady_clock::now();
      const xspan::train::EvalResult r = xspan::train::evaluate(*m.model, *m.task, o);
      const double ms = 1000.0 * seconds_since(t0) / static_cast<double>(r.segments);
      (prune ? on : off).push_back(ms);
      *(prune ? peak_on : peak_off) = r.memory.peak_mem;
    }
  }
  return {xspan::metrics::median(on), xspan::metrics::median(off)};
}

void run_copy(const fs::path& work) {
  bool ordering = true, memory = true, reduction = true, faster = true, bounded = true;
  std::ostringstream d6, d8, d9;
  double slowest = 0.0;
  for (int seed = 1; seed <= 3; ++seed) {
    const TrainedRun ex = train(work, "copy_expire_s" + std::to_string(seed), copy_config(seed, true));
    const TrainedRun fx = train(work, "copy_fixed_s" + std::to_string(seed), copy_config(seed, false));
    slowest = std::max({slowest, ex.seconds, fx.seconds});
    const json e = eval(ex.checkpoint), f = eval(fx.checkpoint);
    const double acc_e = e["accuracy"], acc_f = f["accuracy"], mem = e["avg_mem"];
    ordering = ordering && acc_e >= 0.90 && acc_f <= 0.60;
    memory = memory && mem <= 0.5 * kCopySpan;
    d6 << " s" << seed << ": expire " << fmt(acc_e, 3) << " fixed" << kFixedSpan << " "
       << fmt(acc_f, 3) << " avg_mem " << fmt(mem, 4) << ";";

    const json capped = eval(ex.checkpoint, kOverride);
    const double drop = acc_e - capped["accuracy"].get<double>();
    reduction = reduction && drop >= 0.30;
    d8 << " s" << seed << ": " << fmt(acc_e, 3) << " -> " << fmt(capped["accuracy"].get<double>(), 3)
       << ";";

    int64_t peak_on = 0, peak_off = 0;
    const auto [ms_on, ms_off] = prune_timings(ex.checkpoint, &peak_on, &peak_off);
    const int64_t bound = kCopySpan + 32 + kCopyBlock;
    faster = faster && ms_on < ms_off;
    bounded = bounded && peak_on <= bound && peak_off <= bound;
    d9 << " s" << seed << ": avg_span " << fmt(e["avg_span"].get<double>(), 4) << " ms/batch "
       << fmt(ms_on, 4) << " vs " << fmt(ms_off, 4) << " peak " << peak_on << "/" << peak_off
       << ";";
  }
  d6 << " slowest run " << fmt(slowest, 4) << " s";
  report(6, ordering && memory && slowest <= 1800.0, "D=256 L=512:" + d6.str());
  report(8, reduction, "override " + std::to_string(kOverride) + ":" + d8.str());
  report(9, faster && bounded,
         "L=512 K=64 bound " + std::to_string(kCopySpan + 32 + kCopyBlock) + ":" + d9.str());
}

// ---- criterion 7 ----

json collision_config(int seed, int64_t span) {
  json j;
  j["task"] = "collision_easy";
  j["seed"] = seed;
  j["model"] = {{"n_layers", 3},  {"d_model", 32},       {"n_heads", 4},  {"d_ff", 64},
                {"block_size", 64}, {"max_span", span}, {"ramp", 16},    {"mode", "expire_span"}};
  j["train"] = {{"alpha", 1e-6},       {"learning_rate", 3e-3}, {"warmup_steps", 100},
                {"total_steps", 6000}, {"eval_interval", 6000}, {"batch_size", 2}};
  j["collision"] = {{"grid_size", 4},          {"episode_steps", 64},  {"question_interval", 2},
                    {"mapping_question_rate", 0.0}, {"eval_episodes", 48}};
  return j;
}

void run_collision(const fs::path& work) {
  const std::vector<int64_t> spans = {64, 128, 256};
  std::vector<double> medians;
  std::ostringstream d;
  for (const int64_t span : spans) {
    std::vector<double> errors;
    for (int seed = 1; seed <= 3; ++seed) {
      const TrainedRun r = train(work, "collision_L" + std::to_string(span) + "_s" + std::to_string(seed),
                                 collision_config(seed, span));
      errors.push_back(eval(r.checkpoint)["metric"].get<double>());
    }
    medians.push_back(xspan::metrics::median(errors));
    d << " L=" << span << " error " << fmt(medians.back(), 3) << " [" << fmt(errors[0], 3) << " "
      << fmt(errors[1], 3) << " " << fmt(errors[2], 3) << "];";
  }
  const bool decreasing = medians[0] > medians[1] && medians[1] > medians[2];
  report(7, decreasing, "median over 3 seeds:" + d.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string group = "all";
  std::string work = (fs::temp_directory_path() / "xspan_acceptance").string();
  std::string cli = XSPAN_CLI_PATH;
  app.add_option("--group", group, "Criteria group")
      ->check(CLI::IsMember({"fast", "copy", "collision", "all"}));
  app.add_option("--work-dir", work, "Scratch directory for trained runs");
  app.add_option("--cli", cli, "Path to the xspan binary");
  CLI11_PARSE(app, argc, argv);

  try {
    if (group == "fast" || group == "all") run_fast(cli);
    if (group == "copy" || group == "all") run_copy(fs::path(work) / "copy");
    if (group == "collision" || group == "all") run_collision(fs::path(work) / "collision");
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::sort(g_lines.begin(), g_lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  const auto failed = std::count_if(g_lines.begin(), g_lines.end(), [](const Line& l) { return !l.passed; });
  std::cout << "summary: " << g_lines.size() - static_cast<size_t>(failed) << "/" << g_lines.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
