#include "semirl/task.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "semirl/errors.hpp"
#include "semirl/rng.hpp"
#include "semirl/serialize.hpp"
#include "semirl/version.hpp"

namespace semirl {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kNumPhases> kPhaseNames = {"act", "form_type", "form_answer", "final"};
constexpr uint64_t kSplitSalt = 0x5eed5a17c401d3b7ULL;

std::array<double, 4> instruction_embedding(int instruction_id) {
  const uint64_t h = splitmix64(static_cast<uint64_t>(instruction_id) ^ 0xe3bdull);
  std::array<double, 4> emb{};
  for (int d = 0; d < 4; ++d) emb[d] = ((h >> d) & 1u) ? 0.5 : -0.5;
  return emb;
}

}  // namespace

const char* to_string(StepPhase phase) { return kPhaseNames[static_cast<int>(phase)]; }

std::optional<StepPhase> phase_from_string(const std::string& name) {
  for (int i = 0; i < kNumPhases; ++i) {
    if (name == kPhaseNames[i]) return static_cast<StepPhase>(i);
  }
  return std::nullopt;
}

void ObsLayout::write(const ObsFields& f, std::span<double> dst) const {
  if (f.widget) {
    dst[widget_x_ofs() + f.widget->x] = 1.0;
    dst[widget_y_ofs() + f.widget->y] = 1.0;
  }
  if (f.decoy) {
    dst[decoy_x_ofs() + f.decoy->x] = 1.0;
    dst[decoy_y_ofs() + f.decoy->y] = 1.0;
  }
  if (f.cue_text) dst[cue_text_ofs() + *f.cue_text] = 1.0;
  if (f.cue_dur) dst[cue_dur_ofs() + *f.cue_dur] = 1.0;
  dst[phase_ofs() + static_cast<int>(f.phase)] = 1.0;
  for (int d = 0; d < 4; ++d) dst[instr_ofs() + d] = f.instr_emb[d];
}

const Observation& Task::state(int state_id) const {
  if (state_id < 0 || state_id >= static_cast<int>(states.size())) {
    throw BoundsError("unknown state id " + std::to_string(state_id));
  }
  return states[state_id];
}

void GenConfig::validate() const {
  if (count < 1) throw ConfigError("task_count must be >= 1");
  if (horizon_min < 2 || horizon_max > 64 || horizon_min > horizon_max) {
    throw ConfigError("horizon range must satisfy 2 <= min <= max <= 64");
  }
  if (grid_size < 2) throw ConfigError("grid_size must be >= 2");
  if (n_text < 2) throw ConfigError("n_text_tokens must be >= 2");
  if (n_dur < 1) throw ConfigError("n_dur_tokens must be >= 1");
  if (eval_count < 0 || eval_count >= count) throw ConfigError("eval_count must be in [0, task_count)");
  if (distractor_actions < 0) throw ConfigError("distractor_actions must be >= 0");
  if (wait_step_prob < 0.0 || wait_step_prob > 1.0) throw ConfigError("wait_step_prob must be in [0,1]");
  if (answer_form_prob < 0.0 || answer_form_prob > 1.0) throw ConfigError("answer_form_prob must be in [0,1]");
}

std::vector<const Task*> TaskSet::partition(bool eval) const {
  std::vector<const Task*> out;
  for (const Task& t : tasks) {
    if (t.eval_split == eval) out.push_back(&t);
  }
  return out;
}

namespace {

Task generate_one_task(const GenConfig& cfg, int task_id) {
  Rng rng(derive_seed(cfg.seed, 0x7a5c0000ULL + static_cast<uint64_t>(task_id)));

  Task task;
  task.task_id = task_id;
  task.instruction_id = static_cast<int>(rng.next_u64() % (1u << 20));
  task.horizon = cfg.horizon_min + rng.next_int(cfg.horizon_max - cfg.horizon_min + 1);
  const int T = task.horizon;
  const auto emb = instruction_embedding(task.instruction_id);
  const int code = rng.next_int(cfg.n_text);
  const bool answer_form = rng.next_double() < cfg.answer_form_prob;
  // Form screen anywhere after an opener and a reveal screen; the code to
  // enter is shown one screen earlier.
  const int form_pos = T >= 4 ? 3 + rng.next_int(T - 3) : -1;

  // Screens 0..T-1 along the expert path; screen T is the shared dead end.
  task.goal_state = T - 1;
  task.states.resize(T + 1);
  const int lost_state = T;

  auto random_cell = [&] { return Coord{rng.next_int(cfg.grid_size), rng.next_int(cfg.grid_size)}; };

  for (int t = 1; t <= T; ++t) {
    const int sid = t - 1;
    ObsFields f;
    f.instr_emb = emb;
    Action expert;

    if (t == T) {
      f.phase = StepPhase::Final;
      expert.kind = ActionKind::Terminate;
      expert.success = true;
    } else if (t == form_pos) {
      f.phase = answer_form ? StepPhase::FormAnswer : StepPhase::FormType;
      expert.kind = answer_form ? ActionKind::Answer : ActionKind::TypeText;
      expert.text = code;
    } else if (t == 1 && T >= 3) {
      const int app = rng.next_int(cfg.n_text);
      f.cue_text = app;
      expert.kind = ActionKind::Open;
      expert.text = app;
    } else {
      const bool wait_step = rng.next_double() < cfg.wait_step_prob;
      if (wait_step) {
        const int ticks = rng.next_int(cfg.n_dur);
        f.cue_dur = ticks;
        expert.kind = ActionKind::Wait;
        expert.time = ticks;
      } else {
        const Coord widget = random_cell();
        Coord decoy = random_cell();
        while (decoy == widget) decoy = random_cell();
        f.widget = widget;
        f.decoy = decoy;
        expert.kind = ActionKind::Click;
        expert.coordinate = widget;
      }
    }
    if (t == form_pos - 1) f.cue_text = code;

    task.states[sid] = Observation{sid, f};
    task.expert.push_back(ExpertStep{task.states[sid], expert});
  }

  ObsFields lost;
  lost.instr_emb = emb;
  lost.lost = true;
  task.states[lost_state] = Observation{lost_state, lost};

  // Expert transitions advance along the path; decoy clicks and distractor
  // actions fall off to the dead end. Everything else self-loops.
  for (int t = 1; t < T; ++t) {
    const int sid = t - 1;
    const Action& ea = task.expert[t - 1].action;
    task.transitions[{sid, action_key(ea)}] = Task::Edge{ea, sid + 1};
    if (task.states[sid].fields.decoy) {
      Action decoy_click;
      decoy_click.kind = ActionKind::Click;
      decoy_click.coordinate = *task.states[sid].fields.decoy;
      task.transitions[{sid, action_key(decoy_click)}] = Task::Edge{decoy_click, lost_state};
    }
    for (int d = 0; d < cfg.distractor_actions; ++d) {
      Action a;
      a.kind = ActionKind::Click;
      a.coordinate = random_cell();
      const auto key = std::make_pair(sid, action_key(a));
      if (task.transitions.find(key) == task.transitions.end()) {
        task.transitions[key] = Task::Edge{a, lost_state};
      }
    }
  }
  return task;
}

}  // namespace

TaskSet generate_tasks(const GenConfig& cfg) {
  cfg.validate();
  TaskSet ts;
  ts.gen = cfg;
  ts.tasks.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) ts.tasks.push_back(generate_one_task(cfg, i));

  // Eval split: the eval_count highest task-id hashes (seed-independent).
  std::vector<int> order(cfg.count);
  for (int i = 0; i < cfg.count; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [](int a, int b) {
    const uint64_t ha = splitmix64(static_cast<uint64_t>(a) ^ kSplitSalt);
    const uint64_t hb = splitmix64(static_cast<uint64_t>(b) ^ kSplitSalt);
    return ha != hb ? ha > hb : a < b;
  });
  for (int i = 0; i < cfg.eval_count; ++i) ts.tasks[order[i]].eval_split = true;
  return ts;
}

const Observation& expert_next_state(const Task& task, int t) {
  if (t < 1 || t >= task.horizon) {
    throw BoundsError("expert_next_state: t=" + std::to_string(t) + " outside [1, T)");
  }
  return task.expert[t].obs;  // 1-based t+1 -> 0-based index t
}

OnlineStepResult online_step(const Task& task, int state_id, const Action& action) {
  const Observation& here = task.state(state_id);
  if (action.kind == ActionKind::Terminate) {
    const int reward = (state_id == task.goal_state && action.success) ? 1 : 0;
    return OnlineStepResult{here, true, reward};
  }
  const auto it = task.transitions.find({state_id, action_key(action)});
  if (it == task.transitions.end()) return OnlineStepResult{here, false, 0};
  return OnlineStepResult{task.state(it->second.to), false, 0};
}

namespace {

json obs_to_json(const Observation& o) {
  json j;
  j["id"] = o.state_id;
  const ObsFields& f = o.fields;
  if (f.widget) j["widget"] = {f.widget->x, f.widget->y};
  if (f.decoy) j["decoy"] = {f.decoy->x, f.decoy->y};
  if (f.cue_text) j["cue_text"] = *f.cue_text;
  if (f.cue_dur) j["cue_dur"] = *f.cue_dur;
  j["phase"] = to_string(f.phase);
  if (f.lost) j["lost"] = true;
  return j;
}

ObsFields obs_fields_from_json(const json& j, const std::array<double, 4>& emb) {
  ObsFields f;
  if (j.contains("widget")) f.widget = Coord{j["widget"][0].get<int>(), j["widget"][1].get<int>()};
  if (j.contains("decoy")) f.decoy = Coord{j["decoy"][0].get<int>(), j["decoy"][1].get<int>()};
  if (j.contains("cue_text")) f.cue_text = j["cue_text"].get<int>();
  if (j.contains("cue_dur")) f.cue_dur = j["cue_dur"].get<int>();
  const auto phase = phase_from_string(j.at("phase").get<std::string>());
  if (!phase) throw ConfigError("unknown phase in task file");
  f.phase = *phase;
  f.lost = j.value("lost", false);
  f.instr_emb = emb;
  return f;
}

}  // namespace

void save_taskset(const TaskSet& ts, const std::string& path) {
  json j;
  j["format_version"] = kFormatVersion;
  j["tool_version"] = kToolVersion;
  j["gen"] = {
      {"seed", ts.gen.seed},
      {"count", ts.gen.count},
      {"eval_count", ts.gen.eval_count},
      {"horizon_min", ts.gen.horizon_min},
      {"horizon_max", ts.gen.horizon_max},
      {"grid_size", ts.gen.grid_size},
      {"distractor_actions", ts.gen.distractor_actions},
      {"n_text", ts.gen.n_text},
      {"n_dur", ts.gen.n_dur},
      {"wait_step_prob", ts.gen.wait_step_prob},
      {"answer_form_prob", ts.gen.answer_form_prob},
  };
  json tasks = json::array();
  for (const Task& t : ts.tasks) {
    json tj;
    tj["task_id"] = t.task_id;
    tj["instruction_id"] = t.instruction_id;
    tj["horizon"] = t.horizon;
    tj["goal_state"] = t.goal_state;
    tj["split"] = t.eval_split ? "eval" : "train";
    json states = json::array();
    for (const Observation& s : t.states) states.push_back(obs_to_json(s));
    tj["states"] = states;
    json expert = json::array();
    for (const ExpertStep& e : t.expert) {
      expert.push_back(json{{"state_id", e.obs.state_id}, {"action", action_to_json(e.action)}});
    }
    tj["expert"] = expert;
    json trans = json::array();
    for (const auto& [key, edge] : t.transitions) {
      trans.push_back(json{{"from", key.first}, {"action", action_to_json(edge.action)}, {"to", edge.to}});
    }
    tj["transitions"] = trans;
    tasks.push_back(std::move(tj));
  }
  j["tasks"] = std::move(tasks);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

TaskSet load_taskset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task set: " + path);
  json j;
  in >> j;

  if (j.value("format_version", -1) != kFormatVersion) {
    throw ConfigError("unsupported task file format_version in " + path);
  }
  TaskSet ts;
  const json& g = j.at("gen");
  ts.gen.seed = g.at("seed").get<uint64_t>();
  ts.gen.count = g.at("count").get<int>();
  ts.gen.eval_count = g.at("eval_count").get<int>();
  ts.gen.horizon_min = g.at("horizon_min").get<int>();
  ts.gen.horizon_max = g.at("horizon_max").get<int>();
  ts.gen.grid_size = g.at("grid_size").get<int>();
  ts.gen.distractor_actions = g.at("distractor_actions").get<int>();
  ts.gen.n_text = g.at("n_text").get<int>();
  ts.gen.n_dur = g.at("n_dur").get<int>();
  ts.gen.wait_step_prob = g.at("wait_step_prob").get<double>();
  ts.gen.answer_form_prob = g.at("answer_form_prob").get<double>();

  for (const json& tj : j.at("tasks")) {
    Task t;
    t.task_id = tj.at("task_id").get<int>();
    t.instruction_id = tj.at("instruction_id").get<int>();
    t.horizon = tj.at("horizon").get<int>();
    t.goal_state = tj.at("goal_state").get<int>();
    t.eval_split = tj.at("split").get<std::string>() == "eval";
    const auto emb = instruction_embedding(t.instruction_id);
    for (const json& sj : tj.at("states")) {
      Observation o;
      o.state_id = sj.at("id").get<int>();
      o.fields = obs_fields_from_json(sj, emb);
      t.states.push_back(o);
    }
    for (const json& ej : tj.at("expert")) {
      ExpertStep e;
      e.obs = t.state(ej.at("state_id").get<int>());
      e.action = action_from_json(ej.at("action"));
      t.expert.push_back(e);
    }
    for (const json& rj : tj.at("transitions")) {
      const Action a = action_from_json(rj.at("action"));
      t.transitions[{rj.at("from").get<int>(), action_key(a)}] = Task::Edge{a, rj.at("to").get<int>()};
    }
    ts.tasks.push_back(std::move(t));
  }
  return ts;
}

}  // namespace semirl
