#include "semirl/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "semirl/errors.hpp"
#include "semirl/util.hpp"
#include "semirl/version.hpp"

namespace semirl {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: " + value);
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a non-negative integer: " + value);
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: " + value);
  }
}

struct KeyTable {
  std::map<std::string, std::function<void(ExperimentConfig&, const std::string&)>> set;
  std::map<std::string, std::function<std::string(const ExperimentConfig&)>> get;

  void add_int(const std::string& key, int ExperimentConfig::* field) {
    set[key] = [key, field](ExperimentConfig& c, const std::string& v) { c.*field = parse_int(key, v); };
    get[key] = [field](const ExperimentConfig& c) { return std::to_string(c.*field); };
  }
  void add_double(const std::string& key, double ExperimentConfig::* field) {
    set[key] = [key, field](ExperimentConfig& c, const std::string& v) { c.*field = parse_double(key, v); };
    get[key] = [field](const ExperimentConfig& c) { return format_double(c.*field); };
  }
  void add_string(const std::string& key, std::string ExperimentConfig::* field) {
    set[key] = [field](ExperimentConfig& c, const std::string& v) { c.*field = v; };
    get[key] = [field](const ExperimentConfig& c) { return c.*field; };
  }
};

const KeyTable& key_table() {
  static const KeyTable table = [] {
    KeyTable t;
    t.set["seed"] = [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); };
    t.get["seed"] = [](const ExperimentConfig& c) { return std::to_string(c.seed); };

    t.add_int("task_count", &ExperimentConfig::task_count);
    t.add_int("eval_count", &ExperimentConfig::eval_count);
    t.add_int("grid_size", &ExperimentConfig::grid_size);
    t.add_int("horizon_min", &ExperimentConfig::horizon_min);
    t.add_int("horizon_max", &ExperimentConfig::horizon_max);
    t.add_int("distractor_actions", &ExperimentConfig::distractor_actions);
    t.add_int("n_text_tokens", &ExperimentConfig::n_text_tokens);
    t.add_int("n_dur_tokens", &ExperimentConfig::n_dur_tokens);
    t.add_double("wait_step_prob", &ExperimentConfig::wait_step_prob);
    t.add_double("answer_form_prob", &ExperimentConfig::answer_form_prob);

    t.add_int("n_thought_tokens", &ExperimentConfig::n_thought_tokens);
    t.add_int("history_k", &ExperimentConfig::history_k);
    t.add_int("thought_budget", &ExperimentConfig::thought_budget);
    t.add_int("action_budget", &ExperimentConfig::action_budget);
    t.add_double("temperature", &ExperimentConfig::temperature);
    t.add_double("init_noise_std", &ExperimentConfig::init_noise_std);
    t.add_double("format_prior", &ExperimentConfig::format_prior);

    t.add_string("mode", &ExperimentConfig::mode);
    t.add_double("gamma", &ExperimentConfig::gamma);
    t.add_double("omega", &ExperimentConfig::omega);
    t.add_double("eta", &ExperimentConfig::eta);
    t.add_double("clip_eps", &ExperimentConfig::clip_eps);
    t.add_double("kl_beta", &ExperimentConfig::kl_beta);
    t.add_double("learning_rate", &ExperimentConfig::learning_rate);
    t.add_string("patch_epsilon", &ExperimentConfig::patch_epsilon);
    t.add_string("patch_strategy", &ExperimentConfig::patch_strategy);
    t.add_int("group_size", &ExperimentConfig::group_size);
    t.add_int("max_resample_attempts", &ExperimentConfig::max_resample_attempts);
    t.add_int("updates_total", &ExperimentConfig::updates_total);
    t.add_int("mini_batches", &ExperimentConfig::mini_batches);
    t.add_int("tasks_per_update", &ExperimentConfig::tasks_per_update);
    t.add_int("checkpoint_interval", &ExperimentConfig::checkpoint_interval);
    t.add_string("episode_return_mode", &ExperimentConfig::episode_return_mode);
    t.add_string("optimizer", &ExperimentConfig::optimizer);

    t.add_int("match_tol", &ExperimentConfig::match_tol);
    t.add_int("online_budget_slack", &ExperimentConfig::online_budget_slack);
    return t;
  }();
  return table;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = key_table().set.find(key);
  if (it == key_table().set.end()) throw ConfigError("unknown config key: " + key);
  it->second(cfg, value);
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_key(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

void ExperimentConfig::apply_override(const std::string& key_equals_value) {
  const size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + key_equals_value);
  set_key(*this, trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

std::optional<int> ExperimentConfig::patch_epsilon_value() const {
  if (patch_epsilon == "unbounded" || patch_epsilon == "inf") return std::nullopt;
  return parse_int("patch_epsilon", patch_epsilon);
}

void ExperimentConfig::validate() const {
  gen_config().validate();
  if (n_thought_tokens < 1) throw ConfigError("n_thought_tokens must be >= 1");
  if (history_k < 0) throw ConfigError("history_k must be >= 0");
  if (thought_budget < 1) throw ConfigError("thought_budget must be >= 1");
  if (action_budget < 6) throw ConfigError("action_budget must be >= 6 (kind + swipe args + close)");
  if (temperature <= 0.0) throw ConfigError("temperature must be > 0");
  if (init_noise_std < 0.0) throw ConfigError("init_noise_std must be >= 0");
  if (!train_mode_from_string(mode)) throw ConfigError("unknown mode: " + mode);
  if (!patch_strategy_from_string(patch_strategy)) throw ConfigError("unknown patch_strategy: " + patch_strategy);
  if (episode_return_mode != "total" && episode_return_mode != "last_step") {
    throw ConfigError("episode_return_mode must be total or last_step");
  }
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("optimizer must be sgd or adam");
  const auto eps = patch_epsilon_value();
  if (eps.has_value() && *eps < 0) throw ConfigError("patch_epsilon must be >= 0 or unbounded");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
  if (omega < 0.0) throw ConfigError("omega must be >= 0");
  if (online_budget_slack < 0) throw ConfigError("online_budget_slack must be >= 0");
  optimizer_config().validate();
}

std::string ExperimentConfig::resolved_text() const {
  std::ostringstream os;
  os << "# semirl " << kToolVersion << " resolved config\n";
  for (const auto& [key, get] : key_table().get) os << key << " = " << get(*this) << "\n";
  return os.str();
}

GenConfig ExperimentConfig::gen_config() const {
  GenConfig g;
  g.seed = seed;
  g.count = task_count;
  g.eval_count = eval_count;
  g.horizon_min = horizon_min;
  g.horizon_max = horizon_max;
  g.grid_size = grid_size;
  g.distractor_actions = distractor_actions;
  g.n_text = n_text_tokens;
  g.n_dur = n_dur_tokens;
  g.wait_step_prob = wait_step_prob;
  g.answer_form_prob = answer_form_prob;
  return g;
}

VocabSpec ExperimentConfig::vocab_spec() const { return vocab_spec_for(gen_config()); }

VocabSpec ExperimentConfig::vocab_spec_for(const GenConfig& gen) const {
  VocabSpec v;
  v.grid = gen.grid_size;
  v.n_text = gen.n_text;
  v.n_dur = gen.n_dur;
  v.n_thought = n_thought_tokens;
  v.thought_budget = thought_budget;
  v.action_budget = action_budget;
  return v;
}

OptimizerConfig ExperimentConfig::optimizer_config() const {
  OptimizerConfig o;
  o.mode = *train_mode_from_string(mode);
  o.learning_rate = learning_rate;
  o.clip_eps = clip_eps;
  o.kl_beta = kl_beta;
  o.omega = omega;
  o.gamma = gamma;
  o.eta = eta;
  o.group_size = group_size;
  o.max_resample_attempts = max_resample_attempts;
  o.updates_total = updates_total;
  o.mini_batches = mini_batches;
  o.tasks_per_update = tasks_per_update;
  o.checkpoint_interval = checkpoint_interval;
  o.patch.strategy = *patch_strategy_from_string(patch_strategy);
  o.patch.epsilon = patch_epsilon_value();
  o.tol = match_tol;
  o.episode_mode = episode_return_mode == "total" ? EpisodeReturnMode::Total : EpisodeReturnMode::LastStep;
  o.optimizer = optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  return o;
}

}  // namespace semirl
