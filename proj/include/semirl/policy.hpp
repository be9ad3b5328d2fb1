#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semirl/matrix.hpp"
#include "semirl/rng.hpp"
#include "semirl/task.hpp"
#include "semirl/vocab.hpp"

namespace semirl {

// One history slot: the screen plus what was actually written into the
// dialogue at that step (sampled content where matched, injected content
// where patched, possibly no action at all for unparseable online output).
struct HistoryEntry {
  Observation obs;
  std::optional<Action> action;
  std::vector<int> thought;
};

// Bounded window of the most recent steps, oldest evicted first.
class HistoryWindow {
 public:
  explicit HistoryWindow(int capacity) : capacity_(capacity) {}

  void push(HistoryEntry e) {
    entries_.push_back(std::move(e));
    while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(entries_.size()); }
  // entry(0) is the most recent step.
  const HistoryEntry& entry(int age) const { return entries_[entries_.size() - 1 - age]; }

 private:
  int capacity_;
  std::deque<HistoryEntry> entries_;
};

// Context feature layout:
//   [bias | current obs | window slot 0 (most recent) .. slot K-1 |
//    patch hint | response position 1h | decode state 1h | arg role 1h]
// Each window slot holds the entry's obs block followed by a response block
// (kind 1h + argument value bags + thought bag).
struct FeatureLayout {
  VocabSpec vocab;
  int history_k = 2;

  ObsLayout obs_layout() const { return ObsLayout{vocab.grid, vocab.n_text, vocab.n_dur}; }

  int bias_ofs() const { return 0; }
  int obs_ofs() const { return 1; }
  int response_block_size() const {
    return kNumKinds + 2 * vocab.grid + vocab.n_text + vocab.n_dur + 2 + vocab.n_thought;
  }
  int entry_size() const { return obs_layout().size() + response_block_size(); }
  int win_ofs(int slot) const { return obs_ofs() + obs_layout().size() + slot * entry_size(); }
  int hint_ofs() const { return win_ofs(history_k); }
  int hint_size() const { return kNumKinds + 2 * vocab.grid + vocab.n_text + vocab.n_dur + 2; }
  int pos_ofs() const { return hint_ofs() + hint_size(); }
  int gram_ofs() const { return pos_ofs() + vocab.max_response_len(); }
  int role_ofs() const { return gram_ofs() + 6; }  // 6 non-terminal decode states
  int size() const { return role_ofs() + kNumArgRoles; }

  // Static part of the context (decode block left zero). hint may be null.
  std::vector<double> build_base(const Observation& obs, const HistoryWindow& win,
                                 const Action* hint) const;
  // Rewrites the decode block of ctx for the given position.
  void write_decode(std::span<double> ctx, int pos, DecodeState state, ArgRole role) const;
};

struct PolicyParams {
  FeatureLayout layout;
  double temperature = 1.0;
  Matrix weights;  // vocab.size() x layout.size()
};

PolicyParams make_params(const VocabSpec& vocab, int history_k, double temperature);

// Gaussian noise plus logit bonuses on the grammar-state features, so the
// initial policy mostly emits well-formed responses with random content
// (the desk-scale stand-in for starting from an instruction-tuned model).
void init_format_primed(PolicyParams& params, double prior, double noise_std, uint64_t seed);

// A policy whose greedy decode reproduces the expert action on every
// generated screen. Test fixture and linear-separability witness.
PolicyParams make_expert_oracle(const VocabSpec& vocab, int history_k);

// --- softmax head over an explicit context ---------------------------------

// logits = W * ctx / temperature, converted in place to log-probabilities.
void compute_logprobs(const Matrix& weights, std::span<const double> ctx, double temperature,
                      std::vector<double>& out);
double entropy_from_logprobs(std::span<const double> logprobs);
int sample_from_logprobs(std::span<const double> logprobs, Rng& rng);
int argmax_token(std::span<const double> logprobs);  // ties broken by lowest index

// --- policy operations ------------------------------------------------------

Response sample_response(const PolicyParams& params, const Observation& obs, const HistoryWindow& win,
                         Rng& rng, bool greedy = false);

// Per-token log-probabilities of a given token stream under the same context
// construction as sampling. Throws VocabError on out-of-vocabulary tokens.
std::vector<double> logprob_sequence(const PolicyParams& params, const Observation& obs,
                                     const HistoryWindow& win, std::span<const int> tokens);

// Analytic gradient of sum_k log p(token_k) with respect to the weights.
Matrix grad_logprob(const PolicyParams& params, const Observation& obs, const HistoryWindow& win,
                    std::span<const int> tokens);

// Shannon entropy (nats) of the next-token distribution after a prefix.
double entropy_at(const PolicyParams& params, const Observation& obs, const HistoryWindow& win,
                  std::span<const int> prefix);

// Thought sampled from the policy with the expert action exposed through the
// hint block; restricted to the thought sub-vocabulary. No log-probs kept.
std::vector<int> onpolicy_patch_thought(const PolicyParams& params, const Action& expert,
                                        const Observation& obs, const HistoryWindow& win, Rng& rng,
                                        bool greedy = false);

// Scripted stand-in for an auxiliary thought model: deterministic template
// over (kind, args, phase).
std::vector<int> auxiliary_thought(const VocabSpec& vocab, const Action& expert, const Observation& obs);

// --- checkpoints -------------------------------------------------------------

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

// --- sampler interface -------------------------------------------------------

// Rollout-facing abstraction: the real policy and scripted test policies both
// implement it.
class ResponseSampler {
 public:
  virtual ~ResponseSampler() = default;
  virtual Response sample_step(const Task& task, int t, const Observation& obs,
                               const HistoryWindow& win, Rng& rng) const = 0;
  virtual std::vector<int> patch_thought(const Task& task, const Observation& obs,
                                         const HistoryWindow& win, const Action& expert,
                                         Rng& rng) const {
    (void)task;
    (void)obs;
    (void)win;
    (void)expert;
    (void)rng;
    return {};
  }
  virtual int history_capacity() const { return 2; }
  // Vocabulary used to render injected content, when the sampler has one.
  virtual std::optional<VocabSpec> vocab() const { return std::nullopt; }
};

class PolicySampler : public ResponseSampler {
 public:
  PolicySampler(const PolicyParams& params, bool greedy) : params_(&params), greedy_(greedy) {}

  Response sample_step(const Task&, int, const Observation& obs, const HistoryWindow& win,
                       Rng& rng) const override {
    return sample_response(*params_, obs, win, rng, greedy_);
  }
  std::vector<int> patch_thought(const Task&, const Observation& obs, const HistoryWindow& win,
                                 const Action& expert, Rng& rng) const override {
    return onpolicy_patch_thought(*params_, expert, obs, win, rng, greedy_);
  }
  int history_capacity() const override { return params_->layout.history_k; }
  std::optional<VocabSpec> vocab() const override { return params_->layout.vocab; }

 private:
  const PolicyParams* params_;
  bool greedy_;
};

}  // namespace semirl
