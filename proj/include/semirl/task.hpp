#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semirl/action.hpp"

namespace semirl {

enum class StepPhase : int { Act = 0, FormType, FormAnswer, Final };
inline constexpr int kNumPhases = 4;

const char* to_string(StepPhase phase);
std::optional<StepPhase> phase_from_string(const std::string& name);

// Semantic content of a screen. Feature vectors are derived from these fields,
// so a state id uniquely determines its features.
struct ObsFields {
  std::optional<Coord> widget;    // highlighted control (click target)
  std::optional<Coord> decoy;     // look-alike control leading nowhere
  std::optional<int> cue_text;    // displayed text id (app icon or revealed code)
  std::optional<int> cue_dur;     // displayed loading-time ticks
  StepPhase phase = StepPhase::Act;
  std::array<double, 4> instr_emb{};  // per-task instruction embedding
  bool lost = false;                  // dead-end screen off the expert path

  bool operator==(const ObsFields&) const = default;
};

struct Observation {
  int state_id = 0;
  ObsFields fields;

  bool operator==(const Observation&) const = default;
};

// Layout of the observation feature block:
//   [widget_x 1h | widget_y 1h | decoy_x 1h | decoy_y 1h | cue_text 1h |
//    cue_dur 1h | phase 1h | instruction embedding]
struct ObsLayout {
  int grid = 5;
  int n_text = 6;
  int n_dur = 3;

  int widget_x_ofs() const { return 0; }
  int widget_y_ofs() const { return grid; }
  int decoy_x_ofs() const { return 2 * grid; }
  int decoy_y_ofs() const { return 3 * grid; }
  int cue_text_ofs() const { return 4 * grid; }
  int cue_dur_ofs() const { return 4 * grid + n_text; }
  int phase_ofs() const { return 4 * grid + n_text + n_dur; }
  int instr_ofs() const { return phase_ofs() + kNumPhases; }
  int size() const { return instr_ofs() + 4; }

  // Writes the block into dst (which must have size() entries, pre-zeroed).
  void write(const ObsFields& f, std::span<double> dst) const;
};

struct ExpertStep {
  Observation obs;
  Action action;
};

// A deterministic multi-step scenario: expert trajectory plus the true
// simulator (transition table) used by the online baseline.
struct Task {
  struct Edge {
    Action action;
    int to = 0;
  };

  int task_id = 0;
  int instruction_id = 0;
  int horizon = 0;  // T
  int goal_state = 0;
  bool eval_split = false;
  std::vector<ExpertStep> expert;   // length T
  std::vector<Observation> states;  // indexed by state id
  std::map<std::pair<int, uint64_t>, Edge> transitions;  // keyed by (state, action key)

  const Observation& state(int state_id) const;
};

struct GenConfig {
  uint64_t seed = 7;
  int count = 70;
  int eval_count = 20;
  int horizon_min = 4;
  int horizon_max = 8;
  int grid_size = 5;
  int distractor_actions = 2;
  int n_text = 6;
  int n_dur = 3;
  double wait_step_prob = 0.25;
  double answer_form_prob = 0.3;

  void validate() const;  // throws ConfigError
};

struct TaskSet {
  GenConfig gen;
  std::vector<Task> tasks;

  std::vector<const Task*> partition(bool eval) const;
  ObsLayout obs_layout() const { return ObsLayout{gen.grid_size, gen.n_text, gen.n_dur}; }
};

// Deterministic in seed. Tasks are split into train/eval by ranking
// splitmix64(task_id ^ salt): the eval_count highest hashes are eval.
TaskSet generate_tasks(const GenConfig& cfg);

// Expert next state for 1 <= t < T (1-based step index).
const Observation& expert_next_state(const Task& task, int t);

struct OnlineStepResult {
  Observation obs;
  bool done = false;
  int terminal_reward = 0;
};

// True-simulator step: expert and distractor transitions from the table,
// everything else self-loops. terminate ends the episode; the reward is 1
// only for a success-status terminate at the goal state.
OnlineStepResult online_step(const Task& task, int state_id, const Action& action);

// Versioned task-set file.
void save_taskset(const TaskSet& ts, const std::string& path);
TaskSet load_taskset(const std::string& path);

}  // namespace semirl
