#include "semirl/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "semirl/errors.hpp"
#include "semirl/util.hpp"

namespace semirl {

int successful_steps(const ResponseSampler& sampler, const Task& task, int tol) {
  PatchConfig no_patch;
  no_patch.epsilon = 0;
  const Rollout r = semi_online_rollout(sampler, task, no_patch, tol, /*seed=*/0);
  return r.last_step_index() - (r.terminated_early ? 1 : 0);
}

SopResult evaluate_sop(const ResponseSampler& sampler, std::span<const Task* const> tasks, int tol,
                       int jobs) {
  if (tasks.empty()) throw ConfigError("evaluate_sop: empty task partition");
  SopResult out;
  out.per_task.resize(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    const Task& task = *tasks[i];
    out.per_task[i] = SopTaskRow{task.task_id, successful_steps(sampler, task, tol), task.horizon};
  });
  double pg = 0.0;
  double tsr = 0.0;
  for (const SopTaskRow& row : out.per_task) {
    pg += static_cast<double>(row.s) / static_cast<double>(row.t);
    tsr += row.s == row.t ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(tasks.size());
  out.pg = pg / n;
  out.tsr = tsr / n;
  out.score = (out.pg + out.tsr) / 2.0;
  return out;
}

OnlineEvalResult evaluate_online(const ResponseSampler& sampler, std::span<const Task* const> tasks,
                                 int budget_slack, int jobs) {
  if (tasks.empty()) throw ConfigError("evaluate_online: empty task partition");
  OnlineEvalResult out;
  out.per_task.resize(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    const Task& task = *tasks[i];
    const OnlineTrajectory traj = online_rollout(sampler, task, task.horizon + budget_slack, /*seed=*/0);
    out.per_task[i] = OnlineEvalRow{task.task_id, traj.terminal_reward, static_cast<int>(traj.steps.size())};
  });
  double sum = 0.0;
  for (const OnlineEvalRow& row : out.per_task) sum += row.reward;
  out.success_rate = sum / static_cast<double>(tasks.size());
  return out;
}

CorrelationResult r_squared_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ConfigError("r_squared_fit requires two series of equal length >= 2");
  }
  const double x_bar = mean_of(xs);
  const double y_bar = mean_of(ys);
  double sxx = 0.0;
  double sxy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - x_bar) * (xs[i] - x_bar);
    sxy += (xs[i] - x_bar) * (ys[i] - y_bar);
  }
  double ss_tot = 0.0;
  for (double y : ys) ss_tot += (y - y_bar) * (y - y_bar);
  if (ss_tot == 0.0) throw UndefinedCorrelationError("constant dependent variable, SS_tot = 0");
  if (sxx == 0.0) throw UndefinedCorrelationError("constant independent variable, OLS slope undefined");

  CorrelationResult out;
  out.n = static_cast<int>(xs.size());
  out.slope = sxy / sxx;
  out.intercept = y_bar - out.slope * x_bar;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double pred = out.intercept + out.slope * xs[i];
    out.ss_res += (ys[i] - pred) * (ys[i] - pred);
  }
  out.ss_tot = ss_tot;
  out.r_squared = 1.0 - out.ss_res / out.ss_tot;
  return out;
}

namespace {

int update_index_from_path(const std::string& path, int fallback) {
  // Trailing digit run of the file stem, e.g. ckpt_000050.json -> 50.
  const size_t slash = path.find_last_of('/');
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  const size_t dot = name.find_last_of('.');
  if (dot != std::string::npos) name = name.substr(0, dot);
  size_t end = name.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(name[end - 1]))) --end;
  if (end == name.size()) return fallback;
  return std::stoi(name.substr(end));
}

}  // namespace

CorrelationStudy correlate_checkpoints(const std::vector<std::string>& checkpoint_paths,
                                       const TaskSet& tasks, int tol, int budget_slack, int jobs) {
  if (checkpoint_paths.size() < 2) throw ConfigError("correlate requires at least 2 checkpoints");
  const std::vector<const Task*> eval_tasks = tasks.partition(true);
  if (eval_tasks.empty()) throw ConfigError("task set has no eval partition");

  CorrelationStudy study;
  for (size_t i = 0; i < checkpoint_paths.size(); ++i) {
    const PolicyParams params = load_checkpoint(checkpoint_paths[i]);
    const PolicySampler sampler(params, /*greedy=*/true);
    CheckpointMetrics row;
    row.path = checkpoint_paths[i];
    row.update = update_index_from_path(checkpoint_paths[i], static_cast<int>(i));
    row.sop = evaluate_sop(sampler, eval_tasks, tol, jobs);
    row.online_success = evaluate_online(sampler, eval_tasks, budget_slack, jobs).success_rate;
    study.rows.push_back(std::move(row));
  }

  std::vector<double> xs, ys;
  for (const CheckpointMetrics& row : study.rows) {
    xs.push_back(row.sop.score);
    ys.push_back(row.online_success);
  }
  study.fit = r_squared_fit(xs, ys);
  return study;
}

}  // namespace semirl
