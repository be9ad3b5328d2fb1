#include "semirl/rollout.hpp"

#include <array>

#include "semirl/errors.hpp"
#include "semirl/serialize.hpp"

namespace semirl {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 3> kStrategyNames = {"thought_free", "off_policy", "on_policy"};

Rng step_rng(uint64_t seed, int t) { return Rng(derive_seed(seed, 0x57e90000ULL + static_cast<uint64_t>(t))); }

std::vector<HistoryEntry> snapshot(const HistoryWindow& win) {
  std::vector<HistoryEntry> out;
  out.reserve(win.size());
  for (int age = win.size() - 1; age >= 0; --age) out.push_back(win.entry(age));
  return out;
}

std::vector<int> make_patch_thought(const ResponseSampler& sampler, const PatchConfig& patch,
                                    const Task& task, const Observation& obs, const HistoryWindow& win,
                                    const Action& expert, Rng& rng) {
  switch (patch.strategy) {
    case PatchStrategy::ThoughtFree: return {};
    case PatchStrategy::OffPolicy: {
      const auto vocab = sampler.vocab();
      if (!vocab) return {};
      return auxiliary_thought(*vocab, expert, obs);
    }
    case PatchStrategy::OnPolicy: return sampler.patch_thought(task, obs, win, expert, rng);
  }
  return {};
}

}  // namespace

const char* to_string(PatchStrategy s) { return kStrategyNames[static_cast<int>(s)]; }

std::optional<PatchStrategy> patch_strategy_from_string(const std::string& name) {
  for (size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (name == kStrategyNames[i]) return static_cast<PatchStrategy>(i);
  }
  return std::nullopt;
}

Rollout semi_online_rollout(const ResponseSampler& sampler, const Task& task, const PatchConfig& patch,
                            int tol, uint64_t seed) {
  Rollout r;
  r.task_id = task.task_id;
  HistoryWindow win(sampler.history_capacity());

  for (int t = 1; t <= task.horizon; ++t) {
    const Observation& obs = task.expert[t - 1].obs;
    const Action& expert = task.expert[t - 1].action;
    Rng rng = step_rng(seed, t);

    RolloutStep step;
    step.obs = obs;
    step.expert_action = expert;
    step.window_before = snapshot(win);
    step.response = sampler.sample_step(task, t, obs, win, rng);
    step.reward = reward_components(step.response, expert, tol);
    step.matched = step.reward.r_acc == 1;

    if (step.matched) {
      step.history_entry = HistoryEntry{obs, step.response.action, step.response.thought};
    } else if (patch.budget_left(r.patches_used)) {
      step.patched = true;
      ++r.patches_used;
      step.history_entry =
          HistoryEntry{obs, expert, make_patch_thought(sampler, patch, task, obs, win, expert, rng)};
    } else {
      r.steps.push_back(std::move(step));
      r.terminated_early = true;
      break;
    }
    win.push(*step.history_entry);
    r.steps.push_back(std::move(step));
  }
  return r;
}

Rollout offline_rollout(const ResponseSampler& sampler, const Task& task, int tol, uint64_t seed) {
  Rollout r;
  r.task_id = task.task_id;
  HistoryWindow win(sampler.history_capacity());

  for (int t = 1; t <= task.horizon; ++t) {
    const Observation& obs = task.expert[t - 1].obs;
    const Action& expert = task.expert[t - 1].action;
    Rng rng = step_rng(seed, t);

    RolloutStep step;
    step.obs = obs;
    step.expert_action = expert;
    step.window_before = snapshot(win);
    step.response = sampler.sample_step(task, t, obs, win, rng);
    step.reward = reward_components(step.response, expert, tol);
    step.matched = step.reward.r_acc == 1;
    // The static history carries the expert pair regardless of the sample.
    step.history_entry = HistoryEntry{obs, expert, {}};
    win.push(*step.history_entry);
    r.steps.push_back(std::move(step));
  }
  return r;
}

OnlineTrajectory online_rollout(const ResponseSampler& sampler, const Task& task, int budget,
                                uint64_t seed) {
  if (budget < task.horizon) {
    throw ConfigError("online rollout budget must be >= task horizon");
  }
  OnlineTrajectory traj;
  traj.task_id = task.task_id;
  HistoryWindow win(sampler.history_capacity());
  Observation obs = task.expert[0].obs;

  for (int t = 1; t <= budget; ++t) {
    Rng rng = step_rng(seed, t);
    Response resp = sampler.sample_step(task, t, obs, win, rng);
    const std::optional<Action> action = resp.action;
    const std::vector<int> thought = resp.thought;
    traj.steps.push_back(OnlineStep{obs, std::move(resp)});

    if (action.has_value()) {
      const OnlineStepResult result = online_step(task, obs.state_id, *action);
      win.push(HistoryEntry{obs, action, thought});
      if (result.done) {
        traj.done = true;
        traj.terminal_reward = result.terminal_reward;
        traj.final_state = result.obs.state_id;
        return traj;
      }
      obs = result.obs;
    } else {
      // Malformed output: the interface ignores it and the screen stays.
      win.push(HistoryEntry{obs, std::nullopt, thought});
    }
  }
  traj.done = true;  // budget exhausted
  traj.terminal_reward = 0;
  traj.final_state = obs.state_id;
  return traj;
}

std::vector<Rollout> group_rollout(const ResponseSampler& sampler, const Task& task, int n,
                                   const PatchConfig& patch, int tol, uint64_t parent_seed) {
  if (n < 2) throw ConfigError("rollout group size must be >= 2");
  std::vector<Rollout> group;
  group.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rollout r = semi_online_rollout(sampler, task, patch, tol,
                                    derive_seed(parent_seed, 0x6e000000ULL + static_cast<uint64_t>(i)));
    r.rollout_index = i;
    group.push_back(std::move(r));
  }
  return group;
}

json rollout_step_record(const Rollout& rollout, int step_index) {
  const RolloutStep& s = rollout.steps[step_index];
  json j;
  j["task_id"] = rollout.task_id;
  j["rollout"] = rollout.rollout_index;
  j["step"] = step_index + 1;
  j["state_id"] = s.obs.state_id;
  j["response"] = response_to_json(s.response);
  j["token_ids"] = s.response.token_ids;
  j["expert_action"] = action_to_json(s.expert_action);
  j["matched"] = s.matched;
  j["patched"] = s.patched;
  j["reward"] = {{"r_format", s.reward.r_format},
                 {"r_type", s.reward.r_type},
                 {"r_acc", s.reward.r_acc},
                 {"r_t", s.reward.r_t}};
  if (s.history_entry.has_value()) {
    json h;
    h["action"] = s.history_entry->action ? action_to_json(*s.history_entry->action) : json(nullptr);
    h["thought"] = s.history_entry->thought;
    j["history_entry"] = h;
  } else {
    j["history_entry"] = nullptr;
  }
  return j;
}

}  // namespace semirl
