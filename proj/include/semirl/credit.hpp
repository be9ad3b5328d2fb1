#pragma once

#include <span>
#include <vector>

#include "semirl/rollout.hpp"

namespace semirl {

// End of the unpatched matching run that starts at step t, plus one, capped
// at the rollout's last step: min(max{k >= t | steps t..k all matched} + 1, T').
// A mismatch at t itself yields t (its own reward still counts).
int t_end(const Rollout& rollout, int t);

// R_t = sum_{k=t}^{t_end} gamma^{k-t} r_k.
double discounted_return(const Rollout& rollout, int t, double gamma);

// Per-rollout discounted returns and their truncation points.
struct ReturnTable {
  std::vector<double> returns;  // index t-1
  std::vector<int> t_ends;      // index t-1
  double gamma = 0.0;
};

ReturnTable compute_returns(const Rollout& rollout, double gamma);

enum class EpisodeReturnMode : int { Total = 0, LastStep };

// Total: sum_{k=1}^{T'} gamma^{k-1} r_k. LastStep: R_{T'} under the t_end rule.
double episode_return(const Rollout& rollout, double gamma, EpisodeReturnMode mode);

// Step advantages at one timestep, normalized over the rollouts still alive
// there (last_step_index >= t) with the group mean and population std. A zero
// std or a single live rollout yields zeros.
std::vector<double> step_advantages(std::span<const ReturnTable> tables, int t);

struct GroupCredit {
  std::vector<ReturnTable> returns;
  std::vector<std::vector<double>> step_adv;  // [rollout][t-1], zero where dead
  std::vector<double> episode_adv;            // [rollout]
  std::vector<std::vector<double>> combined;  // [rollout][t-1]
  double omega = 1.0;
  std::vector<double> mu_t, sigma_t;  // per-timestep group statistics
  double mu_tau = 0.0, sigma_tau = 0.0;
};

GroupCredit compute_group_credit(std::span<const Rollout> group, double gamma, double omega,
                                 EpisodeReturnMode mode);

// Population std over every (rollout, step) combined advantage.
double diversity(const GroupCredit& credit);

}  // namespace semirl
