#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "semirl/optimize.hpp"
#include "semirl/task.hpp"
#include "semirl/vocab.hpp"

namespace semirl {

// Every tunable of the pipeline, loaded from a flat `key = value` file.
// Unknown keys are rejected; the resolved set is echoed into every output
// directory.
struct ExperimentConfig {
  uint64_t seed = 7;

  // task generation
  int task_count = 70;
  int eval_count = 20;
  int grid_size = 5;
  int horizon_min = 4;
  int horizon_max = 8;
  int distractor_actions = 2;
  int n_text_tokens = 6;
  int n_dur_tokens = 3;
  double wait_step_prob = 0.25;
  double answer_form_prob = 0.3;

  // policy
  int n_thought_tokens = 8;
  int history_k = 2;
  int thought_budget = 8;
  int action_budget = 6;
  double temperature = 1.0;
  double init_noise_std = 0.1;
  double format_prior = 8.0;

  // training
  std::string mode = "semi_online";  // semi_online | offline_rl | bc
  double gamma = 0.5;
  double omega = 1.0;
  double eta = 0.3;
  double clip_eps = 0.2;
  double kl_beta = 1e-4;
  double learning_rate = 2.0;  // neural-scale trainers run this objective near 1e-6
  std::string patch_epsilon = "1";  // non-negative integer or "unbounded"
  std::string patch_strategy = "thought_free";
  int group_size = 8;
  int max_resample_attempts = 4;
  int updates_total = 200;
  int mini_batches = 4;
  int tasks_per_update = 50;
  int checkpoint_interval = 25;
  std::string episode_return_mode = "total";  // total | last_step
  std::string optimizer = "sgd";              // sgd | adam

  // evaluation
  int match_tol = 0;
  int online_budget_slack = 4;

  static ExperimentConfig load(const std::string& path);
  void apply_override(const std::string& key_equals_value);
  void validate() const;
  std::string resolved_text() const;  // sorted key = value lines

  GenConfig gen_config() const;
  VocabSpec vocab_spec() const;
  // Vocabulary sized from a generated task set (its grid/text/dur dims win).
  VocabSpec vocab_spec_for(const GenConfig& gen) const;
  OptimizerConfig optimizer_config() const;
  std::optional<int> patch_epsilon_value() const;  // nullopt = unbounded
};

}  // namespace semirl
