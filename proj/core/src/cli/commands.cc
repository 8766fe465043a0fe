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

#include "xspan/cli/commands.h"

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xspan/cli/checkpoint.h"
#include "xspan/cli/run_config.h"
#include "xspan/errors.h"
#include "xspan/expire/span.h"
#include "xspan/metrics/metrics.h"
#include "xspan/numerics/tape.h"
#include "xspan/train/trainer.h"

namespace xspan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool directory_has_entries(const fs::path& dir) {
  return fs::exists(dir) && fs::is_directory(dir) && fs::directory_iterator(dir) != fs::directory_iterator();
}

// Keeps the header and the rows up to `step`.
void truncate_metrics(const fs::path& csv, int64_t step) {
  std::ifstream in(csv);
  if (!in) return;
  std::vector<std::string> kept;
  std::string line;
  while (std::getline(in, line)) {
    if (!kept.empty() && std::stoll(line.substr(0, line.find(','))) > step) continue;
    kept.push_back(line);
  }
  in.close();
  std::ofstream out(csv, std::ios::trunc);
  for (const std::string& l : kept) out << l << '\n';
}

struct LoadedRun {
  RunConfig config;
  std::unique_ptr<tasks::TaskStream> task;
  std::unique_ptr<model::Model> model;
  Checkpoint checkpoint;
};

LoadedRun load_run(const fs::path& checkpoint) {
  LoadedRun run;
  run.checkpoint = read_checkpoint(checkpoint);
  run.config = parse_run_config(run.checkpoint.config_json).config;
  run.task = make_task(run.config);
  run.model = std::make_unique<model::Model>(run.config.model, run.config.seed);
  restore_checkpoint(run.checkpoint, *run.model, nullptr);
  return run;
}

}  // namespace

int cmd_train(const fs::path& config_path, bool resume, std::ostream& log) {
  ParsedConfig parsed = load_run_config(config_path);
  RunConfig& cfg = parsed.config;
  for (const std::string& key : parsed.defaulted) log << "config: default applied for " << key << '\n';
  std::unique_ptr<tasks::TaskStream> task = make_task(cfg);
  const fs::path dir = resolve_run_dir(cfg);

  std::optional<Checkpoint> ckpt;
  if (resume) {
    const auto existing = list_checkpoints(dir);
    if (existing.empty()) throw ConfigError("--resume: no checkpoint in " + dir.string());
    ckpt = read_checkpoint(existing.back());
    log << "resuming from " << existing.back().string() << " (step " << ckpt->step << ")\n";
  } else if (directory_has_entries(dir)) {
    throw ConfigError("run directory " + dir.string() + " is not empty (use --resume to continue)");
  }
  fs::create_directories(dir);
  const std::string echo = run_config_to_json(cfg);
  {
    std::ofstream out(dir / "config.json", std::ios::trunc);
    out << echo << '\n';
  }

  model::Model model(cfg.model, cfg.seed);
  train::Trainer trainer(model, *task, cfg.train);
  const fs::path csv = dir / "metrics.csv";
  if (ckpt) {
    restore_checkpoint(*ckpt, model, &trainer.optim_state());
    truncate_metrics(csv, ckpt->step);
  } else {
    std::ofstream out(csv, std::ios::trunc);
    metrics::write_csv_header(out);
  }
  std::ofstream metrics_out(csv, std::ios::app);

  train::LoopHooks hooks;
  hooks.on_metrics = [&](const metrics::RunMetrics& m) {
    metrics::write_csv_row(metrics_out, m);
    metrics_out.flush();
    log << "step " << m.step << "  task_loss " << m.task_loss << "  span_loss " << m.span_loss
        << "  metric " << m.metric << "  avg_mem " << m.avg_mem << "  ms/batch "
        << m.ms_per_batch << '\n';
  };
  hooks.on_eval_step = [&](int64_t step) {
    write_checkpoint(checkpoint_path(dir, step),
                     make_checkpoint(model, &trainer.optim_state(), step, echo));
    prune_checkpoints(dir, 2);
  };
  try {
    train::train_loop(trainer, model, *task, hooks);
  } catch (const train::NumericHalt& halt) {
    std::ofstream dump(dir / "halt_dump.json", std::ios::trunc);
    dump << halt.dump() << '\n';
    log << "numeric halt: " << halt.what() << " (diagnostics in "
        << (dir / "halt_dump.json").string() << ")\n";
    return kExitNumericHalt;
  } catch (const numerics::NumericError& e) {
    log << "numeric halt: " << e.what() << '\n';
    return kExitNumericHalt;
  }
  log << "training finished at step " << trainer.step_count() << '\n';
  return kExitOk;
}

int cmd_eval(const EvalRequest& request, std::ostream& out, std::ostream& log) {
  LoadedRun run = load_run(request.checkpoint);
  const model::ModelConfig& mc = run.model->config();
  train::EvalOptions options;
  options.prune = request.prune;
  options.max_segments = request.max_segments;
  if (request.max_span_override) {
    if (mc.mode == model::AttentionMode::kFixedSpan) {
      log << "warning: fixed-span checkpoint has no spans; --max-span-override ignored\n";
    } else if (*request.max_span_override > mc.max_span) {
      log << "warning: --max-span-override " << *request.max_span_override
          << " exceeds the trained maximum span " << mc.max_span << "; clamped\n";
      options.max_span_override = static_cast<double>(mc.max_span);
    } else {
      options.max_span_override = static_cast<double>(*request.max_span_override);
    }
  }
  const train::EvalResult r = train::evaluate(*run.model, *run.task, options);
  json j;
  j["task"] = run.task->name();
  j["step"] = run.checkpoint.step;
  j["metric"] = r.metric;
  j["accuracy"] = r.accuracy;
  j["task_loss"] = r.task_loss;
  j["bpb"] = r.bpb;
  j["avg_mem"] = r.memory.avg_mem;
  j["peak_mem"] = r.memory.peak_mem;
  j["avg_span"] = std::isnan(r.memory.avg_span) ? json(nullptr) : json(r.memory.avg_span);
  j["scored_tokens"] = r.scored_tokens;
  j["segments"] = r.segments;
  j["max_span_override"] =
      options.max_span_override ? json(*options.max_span_override) : json(nullptr);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_analyze(const fs::path& checkpoint, const fs::path& input, std::ostream& out,
                std::ostream& log) {
  LoadedRun run = load_run(checkpoint);
  model::Model& m = *run.model;
  if (m.config().mode != model::AttentionMode::kExpireSpan) {
    throw ConfigError("no spans to analyze: checkpoint uses fixed-span attention");
  }
  std::ifstream in(input, std::ios::binary);
  if (!in) throw ConfigError("cannot read input " + input.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::vector<int> tokens;
  if (run.config.task == TaskKind::kCharLm) {
    const tasks::CharCorpus corpus = tasks::CharCorpus::load(run.config.char_lm.path);
    for (char ch : text) {
      const int id = corpus.id_of(static_cast<uint8_t>(ch));
      if (id < 0) throw ConfigError("input byte " + std::to_string(static_cast<uint8_t>(ch)) +
                                    " is not in the training vocabulary");
      tokens.push_back(id);
    }
  } else {
    std::istringstream words(text);
    long long id = 0;
    while (words >> id) {
      if (id < 0 || id >= m.config().vocab_size) {
        throw ConfigError("token id " + std::to_string(id) + " outside the vocabulary");
      }
      tokens.push_back(static_cast<int>(id));
    }
    if (!words.eof()) throw ConfigError("input must be whitespace-separated integer token ids");
  }
  if (tokens.empty()) throw ConfigError("input " + input.string() + " holds no tokens");

  numerics::NoGradGuard no_grad;
  model::StreamState state = m.new_stream();
  std::vector<std::vector<expire::SpanTraceRow>> per_layer(m.layers().size());
  const int64_t k = m.config().block_size;
  const auto len = static_cast<int64_t>(tokens.size());
  for (int64_t s = 0; s < len; s += k) {
    const int64_t n = std::min(k, len - s);
    const model::BlockResult r = m.forward_block(
        state, std::span<const int>(tokens.data() + s, static_cast<size_t>(n)), {});
    for (size_t l = 0; l < r.new_spans.size(); ++l) {
      for (int64_t j = 0; j < n; ++j) {
        per_layer[l].push_back({static_cast<int>(l), s + j, tokens[s + j], r.new_spans[l][j]});
      }
    }
  }
  std::vector<expire::SpanTraceRow> rows;
  for (const auto& layer_rows : per_layer) rows.insert(rows.end(), layer_rows.begin(), layer_rows.end());
  expire::write_span_trace_csv(out, rows);
  log << "wrote " << rows.size() << " span rows\n";
  return kExitOk;
}

int cmd_selftest(Fault fault, std::ostream& out) {
  const SelftestReport report = run_selftest(fault);
  print_report(out, report);
  return report.passed() ? kExitOk : kExitSelftestFailure;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Expire-Span sequence-modeling laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("--config", config_path, "Run config (JSON)")->required();
  train_cmd->add_flag("--resume", resume, "Continue from the newest checkpoint of the run");

  EvalRequest eval_req;
  std::string eval_ckpt;
  bool no_prune = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--max-span-override", eval_req.max_span_override,
                       "Cap spans at inference time");
  eval_cmd->add_flag("--no-prune", no_prune, "Keep expired memories cached");
  eval_cmd->add_option("--max-segments", eval_req.max_segments, "Evaluate at most N segments");

  std::string analyze_ckpt, analyze_input, analyze_output;
  auto* analyze_cmd = app.add_subcommand("analyze", "Export per-token spans as CSV");
  analyze_cmd->add_option("--ckpt", analyze_ckpt, "Checkpoint file")->required();
  analyze_cmd->add_option("--input", analyze_input, "Token or text file")->required();
  analyze_cmd->add_option("--output", analyze_output, "CSV path (default: stdout)");

  std::string fault_name;
  auto* selftest_cmd = app.add_subcommand("selftest", "Run the invariant suite");
  selftest_cmd->add_option("--inject-fault", fault_name, "Corrupt a component on purpose")
      ->check(CLI::IsMember({"ramp-gradient"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, resume, std::cerr);
    if (*eval_cmd) {
      eval_req.checkpoint = eval_ckpt;
      eval_req.prune = !no_prune;
      return cmd_eval(eval_req, std::cout, std::cerr);
    }
    if (*analyze_cmd) {
      if (analyze_output.empty()) return cmd_analyze(analyze_ckpt, analyze_input, std::cout, std::cerr);
      std::ofstream out(analyze_output, std::ios::trunc);
      if (!out) throw ConfigError("cannot write " + analyze_output);
      return cmd_analyze(analyze_ckpt, analyze_input, out, std::cerr);
    }
    if (*selftest_cmd) {
      return cmd_selftest(fault_name == "ramp-gradient" ? Fault::kRampGradient : Fault::kNone,
                          std::cout);
    }
  } catch (const train::NumericHalt& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumericHalt;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace xspan::cli
