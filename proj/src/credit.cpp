#include "semirl/credit.hpp"

#include <algorithm>

#include "semirl/errors.hpp"
#include "semirl/util.hpp"

namespace semirl {

int t_end(const Rollout& rollout, int t) {
  const int last = rollout.last_step_index();
  if (t < 1 || t > last) throw BoundsError("t_end: step index out of range");
  int k = t - 1;  // empty-run convention when steps[t] itself mismatched
  while (k + 1 <= last && rollout.steps[k].matched) ++k;
  return std::min(k + 1, last);
}

double discounted_return(const Rollout& rollout, int t, double gamma) {
  const int end = t_end(rollout, t);
  double sum = 0.0;
  double weight = 1.0;
  for (int k = t; k <= end; ++k) {
    sum += weight * rollout.steps[k - 1].reward.r_t;
    weight *= gamma;
  }
  return sum;
}

ReturnTable compute_returns(const Rollout& rollout, double gamma) {
  ReturnTable table;
  table.gamma = gamma;
  const int last = rollout.last_step_index();
  table.returns.reserve(last);
  table.t_ends.reserve(last);
  for (int t = 1; t <= last; ++t) {
    table.t_ends.push_back(t_end(rollout, t));
    table.returns.push_back(discounted_return(rollout, t, gamma));
  }
  return table;
}

double episode_return(const Rollout& rollout, double gamma, EpisodeReturnMode mode) {
  const int last = rollout.last_step_index();
  if (last == 0) throw BoundsError("episode_return: empty rollout");
  switch (mode) {
    case EpisodeReturnMode::Total: {
      double sum = 0.0;
      double weight = 1.0;
      for (int k = 1; k <= last; ++k) {
        sum += weight * rollout.steps[k - 1].reward.r_t;
        weight *= gamma;
      }
      return sum;
    }
    case EpisodeReturnMode::LastStep: return discounted_return(rollout, last, gamma);
  }
  throw ConfigError("unknown episode return mode");
}

std::vector<double> step_advantages(std::span<const ReturnTable> tables, int t) {
  std::vector<double> live;
  for (const ReturnTable& tab : tables) {
    if (static_cast<int>(tab.returns.size()) >= t) live.push_back(tab.returns[t - 1]);
  }
  std::vector<double> out(tables.size(), 0.0);
  if (live.size() < 2) return out;
  const double mu = mean_of(live);
  const double sigma = population_std(live);
  if (sigma == 0.0) return out;
  for (size_t i = 0; i < tables.size(); ++i) {
    if (static_cast<int>(tables[i].returns.size()) >= t) {
      out[i] = (tables[i].returns[t - 1] - mu) / sigma;
    }
  }
  return out;
}

GroupCredit compute_group_credit(std::span<const Rollout> group, double gamma, double omega,
                                 EpisodeReturnMode mode) {
  GroupCredit credit;
  credit.omega = omega;
  int max_t = 0;
  for (const Rollout& r : group) {
    credit.returns.push_back(compute_returns(r, gamma));
    max_t = std::max(max_t, r.last_step_index());
  }

  credit.step_adv.assign(group.size(), {});
  for (size_t i = 0; i < group.size(); ++i) {
    credit.step_adv[i].assign(group[i].last_step_index(), 0.0);
  }
  for (int t = 1; t <= max_t; ++t) {
    std::vector<double> live;
    for (const ReturnTable& tab : credit.returns) {
      if (static_cast<int>(tab.returns.size()) >= t) live.push_back(tab.returns[t - 1]);
    }
    credit.mu_t.push_back(mean_of(live));
    credit.sigma_t.push_back(population_std(live));
    const std::vector<double> col = step_advantages(credit.returns, t);
    for (size_t i = 0; i < group.size(); ++i) {
      if (t <= group[i].last_step_index()) credit.step_adv[i][t - 1] = col[i];
    }
  }

  std::vector<double> episode_returns;
  episode_returns.reserve(group.size());
  for (const Rollout& r : group) episode_returns.push_back(episode_return(r, gamma, mode));
  credit.mu_tau = mean_of(episode_returns);
  credit.sigma_tau = population_std(episode_returns);
  credit.episode_adv.assign(group.size(), 0.0);
  if (group.size() >= 2 && credit.sigma_tau > 0.0) {
    for (size_t i = 0; i < group.size(); ++i) {
      credit.episode_adv[i] = (episode_returns[i] - credit.mu_tau) / credit.sigma_tau;
    }
  }

  credit.combined.assign(group.size(), {});
  for (size_t i = 0; i < group.size(); ++i) {
    credit.combined[i].resize(credit.step_adv[i].size());
    for (size_t t = 0; t < credit.step_adv[i].size(); ++t) {
      credit.combined[i][t] = credit.episode_adv[i] + omega * credit.step_adv[i][t];
    }
  }
  return credit;
}

double diversity(const GroupCredit& credit) {
  std::vector<double> all;
  for (const auto& row : credit.combined) all.insert(all.end(), row.begin(), row.end());
  return population_std(all);
}

}  // namespace semirl
