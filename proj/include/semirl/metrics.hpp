#pragma once

#include <span>
#include <string>
#include <vector>

#include "semirl/policy.hpp"
#include "semirl/rollout.hpp"
#include "semirl/task.hpp"

namespace semirl {

// Number of leading matched steps of an unpatched greedy rollout.
int successful_steps(const ResponseSampler& sampler, const Task& task, int tol);

struct SopTaskRow {
  int task_id = 0;
  int s = 0;  // matched prefix length
  int t = 0;  // expert trajectory length
};

struct SopResult {
  double pg = 0.0;
  double tsr = 0.0;
  double score = 0.0;
  std::vector<SopTaskRow> per_task;
};

// PG = mean s_i/t_i, TSR = mean [s_i = t_i], Score = (PG + TSR) / 2.
SopResult evaluate_sop(const ResponseSampler& sampler, std::span<const Task* const> tasks, int tol,
                       int jobs = 1);

struct OnlineEvalRow {
  int task_id = 0;
  int reward = 0;
  int steps_used = 0;
};

struct OnlineEvalResult {
  double success_rate = 0.0;
  std::vector<OnlineEvalRow> per_task;
};

// Mean terminal reward of greedy true-simulator rollouts. Each task gets a
// step budget of horizon + budget_slack.
OnlineEvalResult evaluate_online(const ResponseSampler& sampler, std::span<const Task* const> tasks,
                                 int budget_slack, int jobs = 1);

struct CorrelationResult {
  double slope = 0.0;
  double intercept = 0.0;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  double r_squared = 0.0;
  int n = 0;
};

// OLS fit of ys on xs with R^2 = 1 - SS_res/SS_tot. Throws
// UndefinedCorrelationError when ys (or xs) are constant.
CorrelationResult r_squared_fit(std::span<const double> xs, std::span<const double> ys);

struct CheckpointMetrics {
  std::string path;
  int update = 0;
  SopResult sop;
  double online_success = 0.0;
};

struct CorrelationStudy {
  std::vector<CheckpointMetrics> rows;
  CorrelationResult fit;  // SOP score (x) vs online success rate (y)
};

CorrelationStudy correlate_checkpoints(const std::vector<std::string>& checkpoint_paths,
                                       const TaskSet& tasks, int tol, int budget_slack, int jobs = 1);

}  // namespace semirl
