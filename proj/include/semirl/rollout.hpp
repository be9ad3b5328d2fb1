#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semirl/action.hpp"
#include "semirl/policy.hpp"
#include "semirl/task.hpp"

namespace semirl {

enum class PatchStrategy : int { ThoughtFree = 0, OffPolicy, OnPolicy };

const char* to_string(PatchStrategy s);
std::optional<PatchStrategy> patch_strategy_from_string(const std::string& name);

struct PatchConfig {
  PatchStrategy strategy = PatchStrategy::ThoughtFree;
  std::optional<int> epsilon = 1;  // nullopt = unbounded (never terminate on mismatch)

  bool budget_left(int used) const { return !epsilon.has_value() || used < *epsilon; }
};

struct RolloutStep {
  Observation obs;
  Response response;  // always the sampled response
  Action expert_action;
  bool matched = false;
  bool patched = false;
  StepReward reward;  // computed on the sampled response, never the patch
  // What was actually written into the dialogue history (absent for the
  // terminating mismatched step, which appends nothing).
  std::optional<HistoryEntry> history_entry;
  // Window contents this step conditioned on (oldest first).
  std::vector<HistoryEntry> window_before;
};

struct Rollout {
  int task_id = 0;
  int rollout_index = 0;
  std::vector<RolloutStep> steps;
  int patches_used = 0;
  bool terminated_early = false;

  // 1-based index of the last recorded step (T' <= T).
  int last_step_index() const { return static_cast<int>(steps.size()); }
};

// Rollout with self-generated history against the expert trajectory: matched
// steps advance with the sampled content, mismatches are patched with the
// expert action until the budget runs out, then the failing step is recorded
// and the rollout stops.
Rollout semi_online_rollout(const ResponseSampler& sampler, const Task& task, const PatchConfig& patch,
                            int tol, uint64_t seed);

// Every step conditions on the expert history regardless of what was sampled;
// always produces all T steps and never patches.
Rollout offline_rollout(const ResponseSampler& sampler, const Task& task, int tol, uint64_t seed);

struct OnlineStep {
  Observation obs;
  Response response;
};

struct OnlineTrajectory {
  int task_id = 0;
  std::vector<OnlineStep> steps;
  int final_state = 0;
  bool done = false;
  int terminal_reward = 0;
};

// True-simulator rollout with self-generated history and sparse terminal
// reward. budget is the absolute step cap (must be >= task.horizon).
OnlineTrajectory online_rollout(const ResponseSampler& sampler, const Task& task, int budget,
                                uint64_t seed);

// N independent semi-online rollouts with rng streams split deterministically
// from the parent seed. N must be >= 2.
std::vector<Rollout> group_rollout(const ResponseSampler& sampler, const Task& task, int n,
                                   const PatchConfig& patch, int tol, uint64_t parent_seed);

// One JSON-lines record per rollout step (--dump-rollouts).
nlohmann::json rollout_step_record(const Rollout& rollout, int step_index);

}  // namespace semirl
