#include "semirl/optimize.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>

#include "semirl/errors.hpp"
#include "semirl/util.hpp"

namespace semirl {

namespace {

constexpr std::array<const char*, 3> kModeNames = {"semi_online", "offline_rl", "bc"};

HistoryWindow window_from(std::span<const HistoryEntry> entries, int capacity) {
  HistoryWindow win(capacity);
  for (const HistoryEntry& e : entries) win.push(e);
  return win;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.next_int(i + 1)]);
  }
}

SurrogateResult surrogate_over(const PolicyParams& theta, const PolicyParams& ref,
                               const std::vector<std::vector<double>>& bases,
                               std::span<const TrainToken> toks, const OptimizerConfig& config) {
  if (toks.empty()) throw DegenerateGroupError("no trainable tokens in batch");
  SurrogateResult out;
  out.token_count = static_cast<int>(toks.size());
  out.grad = Matrix(theta.weights.rows, theta.weights.cols);

  const double inv_k = 1.0 / static_cast<double>(toks.size());
  const double inv_temp = 1.0 / theta.temperature;
  const int v = theta.weights.rows;

  std::vector<double> ctx;
  std::vector<double> lp, lp_ref, p;
  double obj_sum = 0.0;
  double kl_sum = 0.0;
  int clipped = 0;

  for (const TrainToken& tok : toks) {
    ctx = bases[tok.base_idx];
    theta.layout.write_decode(ctx, tok.pos, tok.state, tok.role);
    compute_logprobs(theta.weights, ctx, theta.temperature, lp);
    compute_logprobs(ref.weights, ctx, ref.temperature, lp_ref);
    p.resize(lp.size());
    for (size_t r = 0; r < lp.size(); ++r) p[r] = std::exp(lp[r]);

    const double rho = std::exp(lp[tok.token] - tok.logprob_old);
    const double a = tok.advantage;
    const double unclipped = rho * a;
    const double clipped_ratio = std::clamp(rho, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
    const double clipped_val = clipped_ratio * a;

    double ratio_coef;
    if (unclipped <= clipped_val) {
      obj_sum += unclipped;
      ratio_coef = rho * a;
    } else {
      obj_sum += clipped_val;
      ratio_coef = 0.0;
      ++clipped;
    }

    double kl = 0.0;
    for (size_t r = 0; r < lp.size(); ++r) kl += p[r] * (lp[r] - lp_ref[r]);
    kl_sum += kl;

    // d/dz_r of [min(rho A, clip(rho) A) - beta KL]:
    //   ratio term: ratio_coef * (1[r=tok] - p_r) when the unclipped branch is
    //   active, 0 otherwise; KL term: -beta * p_r ((lp_r - lp_ref_r) - KL).
    for (int r = 0; r < v; ++r) {
      const double dz = ratio_coef * ((r == tok.token ? 1.0 : 0.0) - p[r]) -
                        config.kl_beta * p[r] * ((lp[r] - lp_ref[r]) - kl);
      if (dz == 0.0) continue;
      const double scale = dz * inv_k * inv_temp;
      auto row = out.grad.row(r);
      for (size_t c = 0; c < ctx.size(); ++c) row[c] += scale * ctx[c];
    }
  }

  out.objective = obj_sum * inv_k - config.kl_beta * kl_sum * inv_k;
  out.mean_kl = kl_sum * inv_k;
  out.clip_fraction = static_cast<double>(clipped) * inv_k;
  return out;
}

void apply_ascent(TrainState& state, const Matrix& grad, const OptimizerConfig& config) {
  if (config.optimizer == OptimizerKind::Sgd) {
    state.params.weights.add_scaled(grad, config.learning_rate);
    return;
  }
  // Adam (ascent direction). Config-gated; the plain-gradient path is what the
  // finite-difference oracles cover.
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (!state.adam_m.same_shape(grad)) {
    state.adam_m = Matrix(grad.rows, grad.cols);
    state.adam_v = Matrix(grad.rows, grad.cols);
    state.adam_steps = 0;
  }
  ++state.adam_steps;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.adam_steps));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.adam_steps));
  for (size_t i = 0; i < grad.data.size(); ++i) {
    const double g = grad.data[i];
    state.adam_m.data[i] = b1 * state.adam_m.data[i] + (1.0 - b1) * g;
    state.adam_v.data[i] = b2 * state.adam_v.data[i] + (1.0 - b2) * g * g;
    const double mhat = state.adam_m.data[i] / bc1;
    const double vhat = state.adam_v.data[i] / bc2;
    state.params.weights.data[i] += config.learning_rate * mhat / (std::sqrt(vhat) + eps);
  }
}

GroupCredit make_credit(std::span<const Rollout> group, const OptimizerConfig& config) {
  if (config.mode == TrainMode::OfflineRl) {
    // Per-step advantages over immediate rewards only: gamma forced to 0 and
    // the episode term dropped.
    GroupCredit credit = compute_group_credit(group, 0.0, 1.0, config.episode_mode);
    std::fill(credit.episode_adv.begin(), credit.episode_adv.end(), 0.0);
    credit.combined = credit.step_adv;
    return credit;
  }
  return compute_group_credit(group, config.gamma, config.omega, config.episode_mode);
}

}  // namespace

const char* to_string(TrainMode m) { return kModeNames[static_cast<int>(m)]; }

std::optional<TrainMode> train_mode_from_string(const std::string& name) {
  for (size_t i = 0; i < kModeNames.size(); ++i) {
    if (name == kModeNames[i]) return static_cast<TrainMode>(i);
  }
  return std::nullopt;
}

void OptimizerConfig::validate() const {
  if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("clip_eps must be in (0,1)");
  if (eta < 0.0) throw ConfigError("eta must be >= 0");
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (mini_batches < 1) throw ConfigError("mini_batches must be >= 1");
  if (tasks_per_update < 1) throw ConfigError("tasks_per_update must be >= 1");
  if (updates_total < 1) throw ConfigError("updates_total must be >= 1");
  if (max_resample_attempts < 1) throw ConfigError("max_resample_attempts must be >= 1");
  if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
  if (kl_beta < 0.0) throw ConfigError("kl_beta must be >= 0");
  if (tol < 0) throw ConfigError("match_tol must be >= 0");
  if (mode == TrainMode::OfflineRl && (!patch.epsilon.has_value() || *patch.epsilon != 0)) {
    throw ConfigError("offline_rl mode conditions on expert history; patching must be disabled (patch_epsilon = 0)");
  }
}

void append_trainable_tokens(const PolicyParams& params, const Rollout& rollout,
                             std::span<const double> advantages, TokenBatch& batch) {
  const VocabSpec& vocab = params.layout.vocab;
  for (int t = 1; t <= rollout.last_step_index(); ++t) {
    const RolloutStep& step = rollout.steps[t - 1];
    if (step.patched) continue;  // injected content carries no importance ratio
    if (!step.response.sampled || step.response.token_ids.empty()) continue;

    const HistoryWindow win = window_from(step.window_before, params.layout.history_k);
    batch.bases.push_back(params.layout.build_base(step.obs, win, nullptr));
    const int base_idx = static_cast<int>(batch.bases.size()) - 1;

    const TokenAnalysis analysis = analyze_tokens(vocab, step.response.token_ids);
    for (size_t k = 0; k < step.response.token_ids.size(); ++k) {
      TrainToken tok;
      tok.base_idx = base_idx;
      tok.pos = static_cast<int>(k);
      tok.state = analysis.state_before[k];
      tok.role = analysis.role_before[k];
      tok.token = step.response.token_ids[k];
      tok.logprob_old = step.response.token_logprobs[k];
      tok.advantage = advantages[t - 1];
      batch.toks.push_back(tok);
    }
  }
}

SurrogateResult surrogate_loss(const PolicyParams& theta, const PolicyParams& ref,
                               const TokenBatch& batch, const OptimizerConfig& config) {
  return surrogate_over(theta, ref, batch.bases, batch.toks, config);
}

SampledGroup dynamic_sample(const ResponseSampler& sampler, const Task& task,
                            const OptimizerConfig& config, uint64_t seed) {
  SampledGroup best;
  double best_div = -1.0;
  for (int attempt = 0; attempt < config.max_resample_attempts; ++attempt) {
    const uint64_t attempt_seed = derive_seed(seed, 0xd5a00000ULL + static_cast<uint64_t>(attempt));
    std::vector<Rollout> group;
    if (config.mode == TrainMode::OfflineRl) {
      group.reserve(config.group_size);
      for (int i = 0; i < config.group_size; ++i) {
        Rollout r = offline_rollout(sampler, task, config.tol,
                                    derive_seed(attempt_seed, 0x6e000000ULL + static_cast<uint64_t>(i)));
        r.rollout_index = i;
        group.push_back(std::move(r));
      }
    } else {
      group = group_rollout(sampler, task, config.group_size, config.patch, config.tol, attempt_seed);
    }
    GroupCredit credit = make_credit(group, config);
    const double div = diversity(credit);
    if (div > best_div) {
      best.rollouts = std::move(group);
      best.credit = std::move(credit);
      best.diversity_value = div;
      best_div = div;
    }
    best.attempts = attempt + 1;
    if (best_div > config.eta) {
      best.diversity_flag = false;
      return best;
    }
  }
  best.diversity_flag = true;
  return best;
}

namespace {

// Behavior-cloning step: maximize the mean log-likelihood of the canonical
// expert response under the expert history.
UpdateDiagnostics bc_step(TrainState& state, std::span<const Task* const> batch,
                          const OptimizerConfig& config, uint64_t seed) {
  const PolicyParams& theta = state.params;
  const VocabSpec& vocab = theta.layout.vocab;

  TokenBatch tokens;
  for (const Task* task : batch) {
    HistoryWindow win(theta.layout.history_k);
    for (int t = 1; t <= task->horizon; ++t) {
      const Observation& obs = task->expert[t - 1].obs;
      const Action& expert = task->expert[t - 1].action;
      tokens.bases.push_back(theta.layout.build_base(obs, win, nullptr));
      const int base_idx = static_cast<int>(tokens.bases.size()) - 1;
      const std::vector<int> target = serialize_response_tokens(vocab, {}, expert);
      const TokenAnalysis analysis = analyze_tokens(vocab, target);
      for (size_t k = 0; k < target.size(); ++k) {
        tokens.toks.push_back(TrainToken{base_idx, static_cast<int>(k), analysis.state_before[k],
                                         analysis.role_before[k], target[k], 0.0, 1.0});
      }
      win.push(HistoryEntry{obs, expert, {}});
    }
  }

  UpdateDiagnostics diag;
  diag.mode = TrainMode::Bc;
  if (tokens.toks.empty()) {
    diag.skipped = true;
    return diag;
  }

  // Contiguous chunks in rollout order, chunk order shuffled.
  const int k_total = static_cast<int>(tokens.toks.size());
  const int n_chunks = std::min(config.mini_batches, k_total);
  std::vector<int> chunk_order(n_chunks);
  for (int i = 0; i < n_chunks; ++i) chunk_order[i] = i;
  Rng shuffle_rng(derive_seed(seed, 0x3b5eULL));
  shuffle_indices(chunk_order, shuffle_rng);

  double loglik_sum = 0.0;
  double entropy_sum = 0.0;
  std::vector<double> ctx, lp;
  for (int chunk : chunk_order) {
    const int begin = chunk * k_total / n_chunks;
    const int end = (chunk + 1) * k_total / n_chunks;
    const int k_chunk = end - begin;
    if (k_chunk <= 0) continue;
    Matrix grad(theta.weights.rows, theta.weights.cols);
    const double inv_k = 1.0 / static_cast<double>(k_chunk);
    const double inv_temp = 1.0 / theta.temperature;
    for (int i = begin; i < end; ++i) {
      const TrainToken& tok = tokens.toks[i];
      ctx = tokens.bases[tok.base_idx];
      theta.layout.write_decode(ctx, tok.pos, tok.state, tok.role);
      compute_logprobs(state.params.weights, ctx, theta.temperature, lp);
      loglik_sum += lp[tok.token];
      entropy_sum += entropy_from_logprobs(lp);
      for (int r = 0; r < grad.rows; ++r) {
        const double coef = ((r == tok.token ? 1.0 : 0.0) - std::exp(lp[r])) * inv_k * inv_temp;
        auto row = grad.row(r);
        for (size_t c = 0; c < ctx.size(); ++c) row[c] += coef * ctx[c];
      }
    }
    apply_ascent(state, grad, config);
  }

  diag.loss = loglik_sum / static_cast<double>(k_total);
  diag.mean_entropy = entropy_sum / static_cast<double>(k_total);
  return diag;
}

}  // namespace

UpdateDiagnostics train_step(TrainState& state, std::span<const Task* const> batch,
                             const OptimizerConfig& config, uint64_t seed) {
  return train_step_hooked(state, batch, config, seed, nullptr);
}

UpdateDiagnostics train_step_hooked(TrainState& state, std::span<const Task* const> batch,
                                    const OptimizerConfig& config, uint64_t seed,
                                    const TrainHooks* hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  if (batch.empty()) throw ConfigError("train_step: empty task batch");

  UpdateDiagnostics diag;
  diag.mode = config.mode;

  if (config.mode == TrainMode::Bc) {
    diag = bc_step(state, batch, config, seed);
    diag.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return diag;
  }

  // Rollouts run against the frozen snapshot.
  const PolicyParams theta_old = state.params;
  PolicySampler sampler(theta_old, /*greedy=*/false);

  TokenBatch tokens;
  double reward_sum = 0.0;
  int reward_count = 0;
  double entropy_sum = 0.0;
  long entropy_tokens = 0;
  int full_match = 0;
  int rollouts_total = 0;
  int flagged = 0;

  for (size_t i = 0; i < batch.size(); ++i) {
    const Task& task = *batch[i];
    const SampledGroup group =
        dynamic_sample(sampler, task, config, derive_seed(seed, 0x9a000000ULL + static_cast<uint64_t>(i)));
    if (group.diversity_flag) ++flagged;
    for (size_t gi = 0; gi < group.rollouts.size(); ++gi) {
      const Rollout& r = group.rollouts[gi];
      ++rollouts_total;
      bool all_matched = r.last_step_index() == task.horizon;
      for (const RolloutStep& step : r.steps) {
        reward_sum += step.reward.r_t;
        ++reward_count;
        entropy_sum += step.response.entropy_sum;
        entropy_tokens += static_cast<long>(step.response.token_ids.size());
        all_matched = all_matched && step.matched;
      }
      if (all_matched) ++full_match;
      append_trainable_tokens(theta_old, r, group.credit.combined[gi], tokens);
    }
    if (hooks && hooks->on_group) hooks->on_group(state.update, task, group);
  }

  diag.mean_reward = reward_count > 0 ? reward_sum / reward_count : 0.0;
  diag.mean_entropy = entropy_tokens > 0 ? entropy_sum / static_cast<double>(entropy_tokens) : 0.0;
  diag.tsr_train = rollouts_total > 0 ? static_cast<double>(full_match) / rollouts_total : 0.0;
  diag.diversity_flag_rate = static_cast<double>(flagged) / static_cast<double>(batch.size());

  const int k_total = static_cast<int>(tokens.toks.size());
  if (k_total == 0) {
    diag.skipped = true;
    diag.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return diag;
  }

  const int n_chunks = std::min(config.mini_batches, k_total);
  std::vector<int> chunk_order(n_chunks);
  for (int i = 0; i < n_chunks; ++i) chunk_order[i] = i;
  Rng shuffle_rng(derive_seed(seed, 0x3b5eULL));
  shuffle_indices(chunk_order, shuffle_rng);

  double obj_weighted = 0.0;
  double kl_weighted = 0.0;
  double clip_weighted = 0.0;
  for (int chunk : chunk_order) {
    const int begin = chunk * k_total / n_chunks;
    const int end = (chunk + 1) * k_total / n_chunks;
    if (end <= begin) continue;
    const std::span<const TrainToken> span(tokens.toks.data() + begin, static_cast<size_t>(end - begin));
    const SurrogateResult result = surrogate_over(state.params, state.ref, tokens.bases, span, config);
    obj_weighted += result.objective * result.token_count;
    kl_weighted += result.mean_kl * result.token_count;
    clip_weighted += result.clip_fraction * result.token_count;
    apply_ascent(state, result.grad, config);
  }
  diag.loss = obj_weighted / k_total;
  diag.kl = kl_weighted / k_total;
  diag.clip_fraction = clip_weighted / k_total;
  diag.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return diag;
}

TrainState train(const TaskSet& tasks, const PolicyParams& init, const OptimizerConfig& config,
                 uint64_t seed, const TrainHooks& hooks) {
  config.validate();
  const std::vector<const Task*> train_tasks = tasks.partition(false);
  if (train_tasks.empty()) throw ConfigError("task set has no train partition");

  TrainState state;
  state.params = init;
  state.ref = init;

  if (hooks.on_checkpoint) hooks.on_checkpoint(0, state.params);

  std::vector<int> order(train_tasks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  int cursor = 0;
  int epoch = 0;
  Rng epoch_rng(derive_seed(seed, 0xe90cULL));
  shuffle_indices(order, epoch_rng);

  for (int update = 1; update <= config.updates_total; ++update) {
    std::vector<const Task*> batch;
    batch.reserve(config.tasks_per_update);
    for (int i = 0; i < config.tasks_per_update; ++i) {
      if (cursor == static_cast<int>(order.size())) {
        cursor = 0;
        ++epoch;
        Rng next_rng(derive_seed(seed, 0xe90cULL + static_cast<uint64_t>(epoch)));
        shuffle_indices(order, next_rng);
      }
      batch.push_back(train_tasks[order[cursor++]]);
    }

    state.update = update;
    UpdateDiagnostics diag = train_step_hooked(
        state, batch, config, derive_seed(seed, 0x00d00000ULL + static_cast<uint64_t>(update)), &hooks);
    diag.update = update;
    if (hooks.on_update) hooks.on_update(diag);
    if (hooks.on_checkpoint && update % config.checkpoint_interval == 0) {
      hooks.on_checkpoint(update, state.params);
    }
  }
  return state;
}

}  // namespace semirl
