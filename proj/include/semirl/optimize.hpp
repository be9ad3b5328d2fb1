#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "semirl/credit.hpp"
#include "semirl/policy.hpp"
#include "semirl/rollout.hpp"

namespace semirl {

enum class TrainMode : int { SemiOnline = 0, OfflineRl, Bc };

const char* to_string(TrainMode m);
std::optional<TrainMode> train_mode_from_string(const std::string& name);

enum class OptimizerKind : int { Sgd = 0, Adam };

struct OptimizerConfig {
  TrainMode mode = TrainMode::SemiOnline;
  // Group-normalized advantages keep the objective scale-free, so the
  // feature-linear policy takes steps a neural trainer (~1e-6) never could.
  double learning_rate = 2.0;
  double clip_eps = 0.2;
  double kl_beta = 1e-4;
  double omega = 1.0;
  double gamma = 0.5;
  double eta = 0.3;
  int group_size = 8;
  int max_resample_attempts = 4;
  int updates_total = 200;
  int mini_batches = 4;
  int tasks_per_update = 50;
  int checkpoint_interval = 25;
  PatchConfig patch;
  int tol = 0;
  EpisodeReturnMode episode_mode = EpisodeReturnMode::Total;
  OptimizerKind optimizer = OptimizerKind::Sgd;

  void validate() const;  // throws ConfigError on conflicts
};

// One trainable token: its sampled context (shared step base + decode state),
// the rollout-time log-prob and the combined advantage.
struct TrainToken {
  int base_idx = 0;
  int pos = 0;
  DecodeState state = DecodeState::ExpectThinkOpen;
  ArgRole role = ArgRole::None;
  int token = 0;
  double logprob_old = 0.0;
  double advantage = 0.0;
};

struct TokenBatch {
  std::vector<std::vector<double>> bases;  // context bases, decode block zeroed
  std::vector<TrainToken> toks;
};

// Trainable tokens of a rollout group: every sampled step except patched ones
// (their content is injected, so the importance ratio is undefined).
void append_trainable_tokens(const PolicyParams& params, const Rollout& rollout,
                             std::span<const double> advantages, TokenBatch& batch);

struct SurrogateResult {
  double objective = 0.0;      // (1/K) sum min(rho A, clip(rho) A) - beta * mean KL
  double mean_kl = 0.0;        // closed-form per-token KL vs the reference, averaged
  double clip_fraction = 0.0;  // fraction of tokens where the clip binds
  int token_count = 0;
  Matrix grad;  // analytic gradient of the objective
};

// Throws DegenerateGroupError when the batch holds no tokens.
SurrogateResult surrogate_loss(const PolicyParams& theta, const PolicyParams& ref,
                               const TokenBatch& batch, const OptimizerConfig& config);

struct SampledGroup {
  std::vector<Rollout> rollouts;
  GroupCredit credit;
  bool diversity_flag = false;  // resampling exhausted below the threshold
  int attempts = 0;
  double diversity_value = 0.0;
};

// Draws rollout groups until the combined-advantage std exceeds eta, up to
// max_resample_attempts; otherwise returns the most diverse group, flagged.
SampledGroup dynamic_sample(const ResponseSampler& sampler, const Task& task,
                            const OptimizerConfig& config, uint64_t seed);

struct UpdateDiagnostics {
  int update = 0;
  TrainMode mode = TrainMode::SemiOnline;
  double loss = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double mean_entropy = 0.0;
  double mean_reward = 0.0;
  double diversity_flag_rate = 0.0;
  double tsr_train = 0.0;  // fraction of rollouts fully matching the expert
  double wall_ms = 0.0;
  bool skipped = false;
};

struct TrainState {
  PolicyParams params;
  PolicyParams ref;  // frozen at training start
  int update = 0;
  Matrix adam_m, adam_v;
  long adam_steps = 0;
};

struct TrainHooks {
  std::function<void(int update, const PolicyParams& params)> on_checkpoint;
  std::function<void(const UpdateDiagnostics&)> on_update;
  std::function<void(int update, const Task& task, const SampledGroup& group)> on_group;
};

// One optimization iteration over a task batch: snapshot theta_old, sample
// groups, assign credit, split the trainable tokens into mini-batches, and
// apply gradient-ascent updates sequentially.
UpdateDiagnostics train_step(TrainState& state, std::span<const Task* const> batch,
                             const OptimizerConfig& config, uint64_t seed);
UpdateDiagnostics train_step_hooked(TrainState& state, std::span<const Task* const> batch,
                                    const OptimizerConfig& config, uint64_t seed,
                                    const TrainHooks* hooks);

TrainState train(const TaskSet& tasks, const PolicyParams& init, const OptimizerConfig& config,
                 uint64_t seed, const TrainHooks& hooks = {});

}  // namespace semirl
