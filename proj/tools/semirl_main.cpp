// semirl: seeded experiments for semi-online RL on synthetic multi-turn tasks.
//
// Subcommands: gen-tasks, train, eval, correlate, report. Every command reads
// an optional flat key=value config (--config), applies --set overrides and
// --seed, validates, and echoes the resolved config into the output directory.
// Exit codes: 0 success, 2 configuration/validation error, 1 unexpected error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "semirl/config.hpp"
#include "semirl/credit.hpp"
#include "semirl/errors.hpp"
#include "semirl/metrics.hpp"
#include "semirl/optimize.hpp"
#include "semirl/policy.hpp"
#include "semirl/rollout.hpp"
#include "semirl/task.hpp"
#include "semirl/util.hpp"
#include "semirl/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semirl;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  int jobs = 1;
  std::string out = "out";
};

ExperimentConfig resolve_config(const GlobalArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = ExperimentConfig::load(args.config_path);
  for (const std::string& kv : args.overrides) cfg.apply_override(kv);
  if (args.seed.has_value()) cfg.seed = *args.seed;
  cfg.validate();
  return cfg;
}

void echo_config(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "config_resolved.cfg");
  if (!out) throw ConfigError("cannot write " + (out_dir / "config_resolved.cfg").string());
  out << cfg.resolved_text();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::vector<const Task*> pick_split(const TaskSet& ts, const std::string& split) {
  if (split == "eval") return ts.partition(true);
  if (split == "train") return ts.partition(false);
  if (split == "all") {
    std::vector<const Task*> all;
    for (const Task& t : ts.tasks) all.push_back(&t);
    return all;
  }
  throw ConfigError("unknown split: " + split);
}

std::string checkpoint_name(int update) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06d.json", update);
  return buf;
}

int cmd_gen_tasks(const GlobalArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out_dir(args.out);
  echo_config(cfg, out_dir);
  const TaskSet ts = generate_tasks(cfg.gen_config());
  save_taskset(ts, (out_dir / "tasks.json").string());
  std::cout << "wrote " << (out_dir / "tasks.json").string() << " (" << ts.partition(false).size()
            << " train / " << ts.partition(true).size() << " eval)\n";
  return 0;
}

json diag_record(const UpdateDiagnostics& d) {
  json j;
  j["update"] = d.update;
  j["mode"] = to_string(d.mode);
  j["loss"] = d.loss;
  j["kl"] = d.kl;
  j["clip_fraction"] = d.clip_fraction;
  j["mean_entropy"] = d.mean_entropy;
  j["mean_reward"] = d.mean_reward;
  j["diversity_flag_rate"] = d.diversity_flag_rate;
  j["tsr_train"] = d.tsr_train;
  j["wall_ms"] = d.wall_ms;
  if (d.skipped) j["skipped"] = true;
  return j;
}

int cmd_train(const GlobalArgs& args, const std::string& tasks_path, bool dump_rollouts,
              bool dump_credit) {
  const ExperimentConfig cfg = resolve_config(args);
  if (tasks_path.empty()) throw ConfigError("train requires --tasks");
  const TaskSet ts = load_taskset(tasks_path);
  const fs::path out_dir(args.out);
  echo_config(cfg, out_dir);
  fs::create_directories(out_dir / "checkpoints");

  PolicyParams init = make_params(cfg.vocab_spec_for(ts.gen), cfg.history_k, cfg.temperature);
  init_format_primed(init, cfg.format_prior, cfg.init_noise_std, cfg.seed);

  std::ofstream log(out_dir / "train_log.jsonl");
  if (!log) throw ConfigError("cannot write train log");
  std::ofstream dump;
  if (dump_rollouts || dump_credit) {
    dump.open(out_dir / "rollouts.jsonl");
    if (!dump) throw ConfigError("cannot write rollout dump");
  }

  TrainHooks hooks;
  hooks.on_update = [&](const UpdateDiagnostics& d) { log << diag_record(d).dump() << "\n"; };
  hooks.on_checkpoint = [&](int update, const PolicyParams& params) {
    save_checkpoint(params, (out_dir / "checkpoints" / checkpoint_name(update)).string());
  };
  if (dump.is_open()) {
    hooks.on_group = [&](int update, const Task& task, const SampledGroup& group) {
      (void)task;
      for (size_t i = 0; i < group.rollouts.size(); ++i) {
        const Rollout& r = group.rollouts[i];
        for (int t = 0; t < r.last_step_index(); ++t) {
          json rec = rollout_step_record(r, t);
          rec["update"] = update;
          if (dump_credit) {
            rec["R_t"] = group.credit.returns[i].returns[t];
            rec["t_end"] = group.credit.returns[i].t_ends[t];
            rec["A_S"] = group.credit.step_adv[i][t];
            rec["A_E"] = group.credit.episode_adv[i];
            rec["A"] = group.credit.combined[i][t];
          }
          dump << rec.dump() << "\n";
        }
      }
    };
  }

  train(ts, init, cfg.optimizer_config(), cfg.seed, hooks);
  std::cout << "training complete: " << (out_dir / "train_log.jsonl").string() << "\n";
  return 0;
}

int cmd_eval(const GlobalArgs& args, const std::string& checkpoint, const std::string& tasks_path,
             const std::string& which, const std::string& split) {
  const ExperimentConfig cfg = resolve_config(args);
  if (checkpoint.empty() || tasks_path.empty()) throw ConfigError("eval requires --checkpoint and --tasks");
  const TaskSet ts = load_taskset(tasks_path);
  const fs::path out_dir(args.out);
  echo_config(cfg, out_dir);

  const PolicyParams params = load_checkpoint(checkpoint);
  const PolicySampler sampler(params, /*greedy=*/true);
  const std::vector<const Task*> tasks = pick_split(ts, split);

  if (which == "sop") {
    const SopResult res = evaluate_sop(sampler, tasks, cfg.match_tol, args.jobs);
    std::string csv = "task_id,s,t,progress,success\n";
    for (const SopTaskRow& row : res.per_task) {
      csv += std::to_string(row.task_id) + "," + std::to_string(row.s) + "," + std::to_string(row.t) +
             "," + format_double(static_cast<double>(row.s) / row.t) + "," +
             (row.s == row.t ? "1" : "0") + "\n";
    }
    write_text(out_dir / "sop_per_task.csv", csv);
    json summary = {{"pg", res.pg}, {"tsr", res.tsr}, {"score", res.score}, {"n", res.per_task.size()}};
    write_text(out_dir / "sop_summary.json", summary.dump(1) + "\n");
    std::cout << "SOP pg=" << format_double(res.pg) << " tsr=" << format_double(res.tsr)
              << " score=" << format_double(res.score) << "\n";
  } else if (which == "online") {
    const OnlineEvalResult res = evaluate_online(sampler, tasks, cfg.online_budget_slack, args.jobs);
    std::string csv = "task_id,terminal_reward,steps_used\n";
    for (const OnlineEvalRow& row : res.per_task) {
      csv += std::to_string(row.task_id) + "," + std::to_string(row.reward) + "," +
             std::to_string(row.steps_used) + "\n";
    }
    write_text(out_dir / "online_per_task.csv", csv);
    json summary = {{"success_rate", res.success_rate}, {"n", res.per_task.size()}};
    write_text(out_dir / "online_summary.json", summary.dump(1) + "\n");
    std::cout << "online success_rate=" << format_double(res.success_rate) << "\n";
  } else {
    throw ConfigError("--which must be sop or online");
  }
  return 0;
}

int cmd_correlate(const GlobalArgs& args, const std::string& run_dir, const std::string& tasks_path) {
  const ExperimentConfig cfg = resolve_config(args);
  if (run_dir.empty() || tasks_path.empty()) throw ConfigError("correlate requires --run and --tasks");
  const TaskSet ts = load_taskset(tasks_path);
  const fs::path out_dir(args.out);
  echo_config(cfg, out_dir);

  std::vector<std::string> checkpoints;
  const fs::path ckpt_dir = fs::path(run_dir) / "checkpoints";
  if (fs::is_directory(ckpt_dir)) {
    for (const auto& entry : fs::directory_iterator(ckpt_dir)) {
      if (entry.path().extension() == ".json") checkpoints.push_back(entry.path().string());
    }
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  if (checkpoints.size() < 2) throw ConfigError("correlate needs >= 2 checkpoints under " + ckpt_dir.string());

  const CorrelationStudy study =
      correlate_checkpoints(checkpoints, ts, cfg.match_tol, cfg.online_budget_slack, args.jobs);

  std::string csv = "checkpoint,update,sop_pg,sop_tsr,sop_score,online_success_rate\n";
  for (const CheckpointMetrics& row : study.rows) {
    csv += fs::path(row.path).filename().string() + "," + std::to_string(row.update) + "," +
           format_double(row.sop.pg) + "," + format_double(row.sop.tsr) + "," +
           format_double(row.sop.score) + "," + format_double(row.online_success) + "\n";
  }
  write_text(out_dir / "correlation.csv", csv);
  json summary = {{"slope", study.fit.slope},     {"intercept", study.fit.intercept},
                  {"ss_res", study.fit.ss_res},   {"ss_tot", study.fit.ss_tot},
                  {"r_squared", study.fit.r_squared}, {"n", study.fit.n}};
  write_text(out_dir / "correlation.json", summary.dump(1) + "\n");
  std::cout << "r_squared=" << format_double(study.fit.r_squared)
            << " slope=" << format_double(study.fit.slope) << "\n";
  return 0;
}

int cmd_report(const GlobalArgs& args, const std::string& run_dir) {
  if (run_dir.empty()) throw ConfigError("report requires --run");
  const fs::path log_path = fs::path(run_dir) / "train_log.jsonl";
  std::ifstream log(log_path);
  if (!log) throw ConfigError("missing training log: " + log_path.string());
  const ExperimentConfig cfg = resolve_config(args);
  const fs::path out_dir(args.out);
  echo_config(cfg, out_dir);

  // Curves are copied from the log, never recomputed.
  std::string entropy_csv = "update,mean_entropy\n";
  std::string reward_csv = "update,mean_reward\n";
  std::string tsr_csv = "update,tsr_train\n";
  std::string line;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const std::string update = std::to_string(rec.at("update").get<int>());
    entropy_csv += update + "," + format_double(rec.at("mean_entropy").get<double>()) + "\n";
    reward_csv += update + "," + format_double(rec.at("mean_reward").get<double>()) + "\n";
    tsr_csv += update + "," + format_double(rec.at("tsr_train").get<double>()) + "\n";
  }
  write_text(out_dir / "entropy.csv", entropy_csv);
  write_text(out_dir / "reward.csv", reward_csv);
  write_text(out_dir / "tsr.csv", tsr_csv);

  // Ablation grid over sibling runs, when any are present: each immediate
  // subdirectory holding a resolved config and a training log becomes a row.
  std::vector<fs::path> subruns;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_directory()) continue;
    if (fs::exists(entry.path() / "train_log.jsonl") && fs::exists(entry.path() / "config_resolved.cfg")) {
      subruns.push_back(entry.path());
    }
  }
  std::sort(subruns.begin(), subruns.end());
  if (!subruns.empty()) {
    std::string ab = "run,mode,gamma,patch_epsilon,patch_strategy,final_mean_reward,final_tsr_train\n";
    for (const fs::path& sub : subruns) {
      const ExperimentConfig sub_cfg = ExperimentConfig::load((sub / "config_resolved.cfg").string());
      std::ifstream sub_log(sub / "train_log.jsonl");
      std::string last, row;
      while (std::getline(sub_log, row)) {
        if (!row.empty()) last = row;
      }
      if (last.empty()) continue;
      const json rec = json::parse(last);
      ab += sub.filename().string() + "," + sub_cfg.mode + "," + format_double(sub_cfg.gamma) + "," +
            sub_cfg.patch_epsilon + "," + sub_cfg.patch_strategy + "," +
            format_double(rec.at("mean_reward").get<double>()) + "," +
            format_double(rec.at("tsr_train").get<double>()) + "\n";
    }
    write_text(out_dir / "ablation.csv", ab);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-online RL testbed for multi-turn agents"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "flat key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", args.overrides, "config override key=value (repeatable)");
  uint64_t seed_opt = 0;
  auto* seed_flag = app.add_option("--seed", seed_opt, "override the config seed");
  app.add_option("--jobs", args.jobs, "bounded internal parallelism (never affects outputs)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", args.out, "output directory");

  auto* gen = app.add_subcommand("gen-tasks", "generate a seeded synthetic task set");
  gen->fallthrough();

  std::string tasks_path;
  bool dump_rollouts = false;
  bool dump_credit = false;
  auto* tr = app.add_subcommand("train", "train a policy on a task set");
  tr->fallthrough();
  tr->add_option("--tasks", tasks_path, "task set file")->required();
  tr->add_flag("--dump-rollouts", dump_rollouts, "write sampled rollout steps to rollouts.jsonl");
  tr->add_flag("--dump-credit", dump_credit, "include returns/advantages in the rollout dump");

  std::string checkpoint, which = "sop", split = "eval";
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->fallthrough();
  ev->add_option("--checkpoint", checkpoint, "policy checkpoint file")->required();
  ev->add_option("--tasks", tasks_path, "task set file")->required();
  ev->add_option("--which", which, "sop | online");
  ev->add_option("--split", split, "train | eval | all");

  std::string run_dir;
  auto* co = app.add_subcommand("correlate", "SOP vs online success across a run's checkpoints");
  co->fallthrough();
  co->add_option("--run", run_dir, "training output directory")->required();
  co->add_option("--tasks", tasks_path, "task set file")->required();

  auto* re = app.add_subcommand("report", "plot-ready CSV curves from a training log");
  re->fallthrough();
  re->add_option("--run", run_dir, "training output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_flag->count() > 0) args.seed = seed_opt;

  try {
    if (gen->parsed()) return cmd_gen_tasks(args);
    if (tr->parsed()) return cmd_train(args, tasks_path, dump_rollouts, dump_credit);
    if (ev->parsed()) return cmd_eval(args, checkpoint, tasks_path, which, split);
    if (co->parsed()) return cmd_correlate(args, run_dir, tasks_path);
    if (re->parsed()) return cmd_report(args, run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
