#pragma once

#include <functional>
#include <vector>

#include "semirl/policy.hpp"
#include "semirl/rollout.hpp"
#include "semirl/task.hpp"

namespace semirl::test {

inline VocabSpec small_vocab() {
  VocabSpec v;
  v.grid = 5;
  v.n_text = 6;
  v.n_dur = 3;
  v.n_thought = 8;
  return v;
}

// Well-formed response carrying the given action, as if sampled (dummy
// log-probs so trainability checks hold).
inline Response scripted_response(const VocabSpec& vocab, const Action& action,
                                  std::vector<int> thought = {}) {
  Response r = make_injected_response(vocab, std::move(thought), action);
  r.sampled = true;
  r.token_logprobs.assign(r.token_ids.size(), -1.0);
  return r;
}

// Unparseable response: a lone <think> token.
inline Response malformed_response(const VocabSpec& vocab) {
  Response r;
  r.sampled = true;
  r.token_ids = {vocab.tok_think_open()};
  r.token_logprobs = {-1.0};
  r.format_ok = false;
  return r;
}

// Emits a fixed action per step index (nullopt -> malformed output).
class ScriptedSampler : public ResponseSampler {
 public:
  ScriptedSampler(VocabSpec vocab, std::vector<std::optional<Action>> script)
      : vocab_(vocab), script_(std::move(script)) {}

  Response sample_step(const Task&, int t, const Observation&, const HistoryWindow&,
                       Rng&) const override {
    const auto& slot = script_[(t - 1) % script_.size()];
    if (!slot.has_value()) return malformed_response(vocab_);
    return scripted_response(vocab_, *slot);
  }
  std::optional<VocabSpec> vocab() const override { return vocab_; }

 private:
  VocabSpec vocab_;
  std::vector<std::optional<Action>> script_;
};

// Replays the expert action at every step.
class ExpertSampler : public ResponseSampler {
 public:
  explicit ExpertSampler(VocabSpec vocab) : vocab_(vocab) {}

  Response sample_step(const Task& task, int t, const Observation&, const HistoryWindow&,
                       Rng&) const override {
    return scripted_response(vocab_, task.expert[(t - 1) % task.expert.size()].action);
  }
  std::optional<VocabSpec> vocab() const override { return vocab_; }

 private:
  VocabSpec vocab_;
};

// Arbitrary per-step behavior.
class LambdaSampler : public ResponseSampler {
 public:
  using Fn = std::function<Response(const Task&, int, const Observation&, const HistoryWindow&, Rng&)>;
  LambdaSampler(VocabSpec vocab, Fn fn) : vocab_(vocab), fn_(std::move(fn)) {}

  Response sample_step(const Task& task, int t, const Observation& obs, const HistoryWindow& win,
                       Rng& rng) const override {
    return fn_(task, t, obs, win, rng);
  }
  std::optional<VocabSpec> vocab() const override { return vocab_; }

 private:
  VocabSpec vocab_;
  Fn fn_;
};

inline Action click(int x, int y) {
  Action a;
  a.kind = ActionKind::Click;
  a.coordinate = {x, y};
  return a;
}

inline Action type_text(int text) {
  Action a;
  a.kind = ActionKind::TypeText;
  a.text = text;
  return a;
}

inline Action terminate(bool success = true) {
  Action a;
  a.kind = ActionKind::Terminate;
  a.success = success;
  return a;
}

// Hand-built click chain: T-1 click screens then a terminate screen, expert
// transitions only (no decoys/distractors).
inline Task chain_task(int horizon, int task_id = 0) {
  Task task;
  task.task_id = task_id;
  task.instruction_id = 100 + task_id;
  task.horizon = horizon;
  task.goal_state = horizon - 1;
  task.states.resize(horizon + 1);
  for (int t = 1; t <= horizon; ++t) {
    ObsFields f;
    Action expert;
    if (t == horizon) {
      f.phase = StepPhase::Final;
      expert = terminate();
    } else {
      f.widget = Coord{(t - 1) % 5, (t * 2) % 5};
      expert = click(f.widget->x, f.widget->y);
    }
    task.states[t - 1] = Observation{t - 1, f};
    task.expert.push_back(ExpertStep{task.states[t - 1], expert});
    if (t < horizon) {
      task.transitions[{t - 1, action_key(expert)}] = Task::Edge{expert, t};
    }
  }
  ObsFields lost;
  lost.lost = true;
  task.states[horizon] = Observation{horizon, lost};
  return task;
}

// Random schema-valid action in canonical form (only schema fields set).
inline Action random_action(const VocabSpec& v, Rng& rng) {
  Action a;
  a.kind = static_cast<ActionKind>(rng.next_int(kNumKinds));
  for (ArgRole role : arg_roles(a.kind)) {
    switch (role) {
      case ArgRole::CoordX1: a.coordinate.x = rng.next_int(v.grid); break;
      case ArgRole::CoordY1: a.coordinate.y = rng.next_int(v.grid); break;
      case ArgRole::CoordX2: a.coordinate2.x = rng.next_int(v.grid); break;
      case ArgRole::CoordY2: a.coordinate2.y = rng.next_int(v.grid); break;
      case ArgRole::Text: a.text = rng.next_int(v.n_text); break;
      case ArgRole::Time: a.time = rng.next_int(v.n_dur); break;
      case ArgRole::Status: a.success = rng.next_int(2) == 1; break;
      case ArgRole::None: break;
    }
  }
  return a;
}

}  // namespace semirl::test
