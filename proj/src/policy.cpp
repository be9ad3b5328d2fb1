#include "semirl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "semirl/errors.hpp"
#include "semirl/version.hpp"

namespace semirl {

using nlohmann::json;

namespace {

// Writes kind one-hot plus argument value bags for an action.
void write_action_bag(const VocabSpec& v, const Action& a, std::span<double> dst) {
  const int grid = v.grid;
  dst[static_cast<int>(a.kind)] += 1.0;
  const int x_ofs = kNumKinds;
  const int y_ofs = x_ofs + grid;
  const int txt_ofs = y_ofs + grid;
  const int dur_ofs = txt_ofs + v.n_text;
  const int status_ofs = dur_ofs + v.n_dur;
  switch (a.kind) {
    case ActionKind::Swipe:
      dst[x_ofs + a.coordinate2.x] += 1.0;
      dst[y_ofs + a.coordinate2.y] += 1.0;
      [[fallthrough]];
    case ActionKind::Click:
      dst[x_ofs + a.coordinate.x] += 1.0;
      dst[y_ofs + a.coordinate.y] += 1.0;
      break;
    case ActionKind::TypeText:
    case ActionKind::Key:
    case ActionKind::Open:
    case ActionKind::Answer:
      dst[txt_ofs + a.text] += 1.0;
      break;
    case ActionKind::Wait:
      dst[dur_ofs + a.time] += 1.0;
      break;
    case ActionKind::Terminate:
      dst[status_ofs + (a.success ? 0 : 1)] += 1.0;
      break;
  }
}

}  // namespace

std::vector<double> FeatureLayout::build_base(const Observation& obs, const HistoryWindow& win,
                                              const Action* hint) const {
  std::vector<double> ctx(static_cast<size_t>(size()), 0.0);
  ctx[bias_ofs()] = 1.0;
  const ObsLayout ol = obs_layout();
  ol.write(obs.fields, std::span<double>(ctx).subspan(obs_ofs(), ol.size()));

  const int slots = std::min(history_k, win.size());
  for (int slot = 0; slot < slots; ++slot) {
    const HistoryEntry& e = win.entry(slot);
    auto entry_span = std::span<double>(ctx).subspan(win_ofs(slot), entry_size());
    ol.write(e.obs.fields, entry_span.subspan(0, ol.size()));
    auto resp_span = entry_span.subspan(ol.size(), response_block_size());
    if (e.action) write_action_bag(vocab, *e.action, resp_span);
    const int tht_ofs = response_block_size() - vocab.n_thought;
    for (int tok : e.thought) {
      if (vocab.is_thought(tok)) resp_span[tht_ofs + (tok - vocab.tok_thought(0))] += 1.0;
    }
  }
  if (hint) {
    write_action_bag(vocab, *hint, std::span<double>(ctx).subspan(hint_ofs(), hint_size()));
  }
  return ctx;
}

void FeatureLayout::write_decode(std::span<double> ctx, int pos, DecodeState state, ArgRole role) const {
  std::fill(ctx.begin() + pos_ofs(), ctx.begin() + size(), 0.0);
  if (pos >= 0 && pos < vocab.max_response_len()) ctx[pos_ofs() + pos] = 1.0;
  const int s = static_cast<int>(state);
  if (s < 6) ctx[gram_ofs() + s] = 1.0;  // Done/Invalid carry no grammar guidance
  if (role != ArgRole::None) ctx[role_ofs() + static_cast<int>(role)] = 1.0;
}

PolicyParams make_params(const VocabSpec& vocab, int history_k, double temperature) {
  PolicyParams p;
  p.layout = FeatureLayout{vocab, history_k};
  p.temperature = temperature;
  p.weights = Matrix(vocab.size(), p.layout.size());
  return p;
}

void init_format_primed(PolicyParams& params, double prior, double noise_std, uint64_t seed) {
  const VocabSpec& v = params.layout.vocab;
  Matrix& w = params.weights;
  Rng rng(derive_seed(seed, 0x1417u));
  for (double& x : w.data) x = noise_std * rng.next_normal();

  const int gram = params.layout.gram_ofs();
  const int role = params.layout.role_ofs();
  w.at(v.tok_think_open(), gram + static_cast<int>(DecodeState::ExpectThinkOpen)) += prior;
  // Mild close bias keeps sampled thoughts short but non-empty.
  w.at(v.tok_think_close(), gram + static_cast<int>(DecodeState::InThought)) += 0.75 * prior;
  for (int i = 0; i < v.n_thought; ++i) {
    w.at(v.tok_thought(i), gram + static_cast<int>(DecodeState::InThought)) += 0.6 * prior;
  }
  w.at(v.tok_action_open(), gram + static_cast<int>(DecodeState::ExpectActionOpen)) += prior;
  for (int k = 0; k < kNumKinds; ++k) {
    w.at(v.tok_kind(static_cast<ActionKind>(k)), gram + static_cast<int>(DecodeState::ExpectKind)) += prior;
  }
  for (int i = 0; i < v.grid; ++i) {
    w.at(v.tok_xval(i), role + static_cast<int>(ArgRole::CoordX1)) += prior;
    w.at(v.tok_xval(i), role + static_cast<int>(ArgRole::CoordX2)) += prior;
    w.at(v.tok_yval(i), role + static_cast<int>(ArgRole::CoordY1)) += prior;
    w.at(v.tok_yval(i), role + static_cast<int>(ArgRole::CoordY2)) += prior;
  }
  for (int i = 0; i < v.n_text; ++i) w.at(v.tok_text(i), role + static_cast<int>(ArgRole::Text)) += prior;
  for (int i = 0; i < v.n_dur; ++i) w.at(v.tok_dur(i), role + static_cast<int>(ArgRole::Time)) += prior;
  w.at(v.tok_status(true), role + static_cast<int>(ArgRole::Status)) += prior;
  w.at(v.tok_status(false), role + static_cast<int>(ArgRole::Status)) += prior;
  w.at(v.tok_action_close(), gram + static_cast<int>(DecodeState::ExpectActionClose)) += prior;
}

PolicyParams make_expert_oracle(const VocabSpec& vocab, int history_k) {
  PolicyParams p = make_params(vocab, history_k, 1.0);
  init_format_primed(p, 8.0, 0.0, 0);
  const FeatureLayout& L = p.layout;
  const ObsLayout ol = L.obs_layout();
  Matrix& w = p.weights;
  // Content weights are state-ungated, so they leak into every decode
  // position; 2C must stay below the structural prior for greedy decoding.
  const double C = 3.0;

  // Empty thoughts under greedy decode.
  w.at(vocab.tok_think_close(), L.gram_ofs() + static_cast<int>(DecodeState::InThought)) += 2.0;

  const int obs = L.obs_ofs();
  // Kind selection from the current screen.
  for (int i = 0; i < vocab.grid; ++i) {
    w.at(vocab.tok_kind(ActionKind::Click), obs + ol.widget_x_ofs() + i) += C;
    w.at(vocab.tok_kind(ActionKind::Click), obs + ol.widget_y_ofs() + i) += C;
  }
  for (int i = 0; i < vocab.n_text; ++i) {
    w.at(vocab.tok_kind(ActionKind::Open), obs + ol.cue_text_ofs() + i) += C;
  }
  // 2C: a revealed code can share the screen with a loading cue, and the wait
  // must win that tie (clicks get 2C from their two coordinate one-hots).
  for (int i = 0; i < vocab.n_dur; ++i) {
    w.at(vocab.tok_kind(ActionKind::Wait), obs + ol.cue_dur_ofs() + i) += 2 * C;
  }
  w.at(vocab.tok_kind(ActionKind::TypeText), obs + ol.phase_ofs() + static_cast<int>(StepPhase::FormType)) +=
      2 * C;
  w.at(vocab.tok_kind(ActionKind::Answer), obs + ol.phase_ofs() + static_cast<int>(StepPhase::FormAnswer)) +=
      2 * C;
  w.at(vocab.tok_kind(ActionKind::Terminate), obs + ol.phase_ofs() + static_cast<int>(StepPhase::Final)) +=
      2 * C;

  // Argument selection: coordinates and wait ticks copy the current screen,
  // the form text copies the code revealed on the previous screen, terminate
  // reports success.
  for (int i = 0; i < vocab.grid; ++i) {
    w.at(vocab.tok_xval(i), obs + ol.widget_x_ofs() + i) += C;
    w.at(vocab.tok_yval(i), obs + ol.widget_y_ofs() + i) += C;
  }
  for (int i = 0; i < vocab.n_text; ++i) {
    w.at(vocab.tok_text(i), obs + ol.cue_text_ofs() + i) += C;
    w.at(vocab.tok_text(i), L.win_ofs(0) + ol.cue_text_ofs() + i) += C;
  }
  for (int i = 0; i < vocab.n_dur; ++i) {
    w.at(vocab.tok_dur(i), obs + ol.cue_dur_ofs() + i) += C;
  }
  w.at(vocab.tok_status(true), L.role_ofs() + static_cast<int>(ArgRole::Status)) += C;
  return p;
}

void compute_logprobs(const Matrix& weights, std::span<const double> ctx, double temperature,
                      std::vector<double>& out) {
  const int v = weights.rows;
  out.resize(static_cast<size_t>(v));
  const double inv_temp = 1.0 / temperature;
  for (int r = 0; r < v; ++r) {
    const auto row = weights.row(r);
    double dot = 0.0;
    for (size_t c = 0; c < ctx.size(); ++c) dot += row[c] * ctx[c];
    out[r] = dot * inv_temp;
  }
  double mx = out[0];
  for (double x : out) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : out) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  for (double& x : out) x -= lse;
}

double entropy_from_logprobs(std::span<const double> logprobs) {
  double h = 0.0;
  for (double lp : logprobs) {
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return h;
}

int sample_from_logprobs(std::span<const double> logprobs, Rng& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  for (size_t i = 0; i < logprobs.size(); ++i) {
    acc += std::exp(logprobs[i]);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(logprobs.size()) - 1;
}

int argmax_token(std::span<const double> logprobs) {
  int best = 0;
  for (size_t i = 1; i < logprobs.size(); ++i) {
    if (logprobs[i] > logprobs[best]) best = static_cast<int>(i);
  }
  return best;
}

Response sample_response(const PolicyParams& params, const Observation& obs, const HistoryWindow& win,
                         Rng& rng, bool greedy) {
  const VocabSpec& vocab = params.layout.vocab;
  std::vector<double> ctx = params.layout.build_base(obs, win, nullptr);
  std::vector<double> lp;

  Response r;
  r.sampled = true;
  GrammarCursor cur(vocab);
  const int max_len = vocab.max_response_len();
  for (int pos = 0; pos < max_len; ++pos) {
    params.layout.write_decode(ctx, pos, cur.state(), cur.role());
    compute_logprobs(params.weights, ctx, params.temperature, lp);
    const int tok = greedy ? argmax_token(lp) : sample_from_logprobs(lp, rng);
    r.token_ids.push_back(tok);
    r.token_logprobs.push_back(lp[tok]);
    r.entropy_sum += entropy_from_logprobs(lp);
    cur.advance(tok);
    if (tok == vocab.tok_action_close()) break;
  }

  TokenAnalysis parsed = analyze_tokens(vocab, r.token_ids);
  r.format_ok = parsed.format_ok;
  r.thought = std::move(parsed.thought);
  r.action = parsed.action;
  return r;
}

std::vector<double> logprob_sequence(const PolicyParams& params, const Observation& obs,
                                     const HistoryWindow& win, std::span<const int> tokens) {
  const VocabSpec& vocab = params.layout.vocab;
  for (int tok : tokens) {
    if (tok < 0 || tok >= vocab.size()) throw VocabError("token id out of vocabulary: " + std::to_string(tok));
  }
  std::vector<double> ctx = params.layout.build_base(obs, win, nullptr);
  std::vector<double> lp;
  std::vector<double> out;
  out.reserve(tokens.size());
  GrammarCursor cur(vocab);
  for (size_t pos = 0; pos < tokens.size(); ++pos) {
    params.layout.write_decode(ctx, static_cast<int>(pos), cur.state(), cur.role());
    compute_logprobs(params.weights, ctx, params.temperature, lp);
    out.push_back(lp[tokens[pos]]);
    cur.advance(tokens[pos]);
  }
  return out;
}

Matrix grad_logprob(const PolicyParams& params, const Observation& obs, const HistoryWindow& win,
                    std::span<const int> tokens) {
  const VocabSpec& vocab = params.layout.vocab;
  for (int tok : tokens) {
    if (tok < 0 || tok >= vocab.size()) throw VocabError("token id out of vocabulary: " + std::to_string(tok));
  }
  Matrix grad(params.weights.rows, params.weights.cols);
  std::vector<double> ctx = params.layout.build_base(obs, win, nullptr);
  std::vector<double> lp;
  GrammarCursor cur(vocab);
  const double inv_temp = 1.0 / params.temperature;
  for (size_t pos = 0; pos < tokens.size(); ++pos) {
    params.layout.write_decode(ctx, static_cast<int>(pos), cur.state(), cur.role());
    compute_logprobs(params.weights, ctx, params.temperature, lp);
    // d log p(tok) / dW[r][c] = (1[r=tok] - p_r) * ctx_c / temperature
    for (int r = 0; r < grad.rows; ++r) {
      const double coef = ((r == tokens[pos]) ? 1.0 : 0.0) - std::exp(lp[r]);
      if (coef == 0.0) continue;
      auto row = grad.row(r);
      for (int c = 0; c < grad.cols; ++c) row[c] += coef * ctx[c] * inv_temp;
    }
    cur.advance(tokens[pos]);
  }
  return grad;
}

double entropy_at(const PolicyParams& params, const Observation& obs, const HistoryWindow& win,
                  std::span<const int> prefix) {
  const VocabSpec& vocab = params.layout.vocab;
  std::vector<double> ctx = params.layout.build_base(obs, win, nullptr);
  std::vector<double> lp;
  GrammarCursor cur(vocab);
  for (int tok : prefix) cur.advance(tok);
  params.layout.write_decode(ctx, static_cast<int>(prefix.size()), cur.state(), cur.role());
  compute_logprobs(params.weights, ctx, params.temperature, lp);
  return entropy_from_logprobs(lp);
}

std::vector<int> onpolicy_patch_thought(const PolicyParams& params, const Action& expert,
                                        const Observation& obs, const HistoryWindow& win, Rng& rng,
                                        bool greedy) {
  const VocabSpec& vocab = params.layout.vocab;
  std::vector<double> ctx = params.layout.build_base(obs, win, &expert);
  std::vector<double> lp;

  // Allowed set: thought words plus the closing tag; renormalized softmax.
  std::vector<int> allowed;
  allowed.reserve(vocab.n_thought + 1);
  for (int i = 0; i < vocab.n_thought; ++i) allowed.push_back(vocab.tok_thought(i));
  allowed.push_back(vocab.tok_think_close());

  std::vector<int> thought;
  GrammarCursor cur(vocab);
  cur.advance(vocab.tok_think_open());
  int pos = 1;
  while (static_cast<int>(thought.size()) < vocab.thought_budget) {
    params.layout.write_decode(ctx, pos, cur.state(), cur.role());
    compute_logprobs(params.weights, ctx, params.temperature, lp);

    std::vector<double> masked(allowed.size());
    for (size_t i = 0; i < allowed.size(); ++i) masked[i] = lp[allowed[i]];
    double mx = masked[0];
    for (double x : masked) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : masked) sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    for (double& x : masked) x -= lse;

    const int pick = greedy ? argmax_token(masked) : sample_from_logprobs(masked, rng);
    const int tok = allowed[pick];
    if (tok == vocab.tok_think_close()) break;
    thought.push_back(tok);
    cur.advance(tok);
    ++pos;
  }
  return thought;
}

std::vector<int> auxiliary_thought(const VocabSpec& vocab, const Action& expert, const Observation& obs) {
  std::vector<int> t;
  t.push_back(vocab.tok_kind(expert.kind));
  t.push_back(vocab.tok_thought(static_cast<int>(action_key(expert) % static_cast<uint64_t>(vocab.n_thought))));
  t.push_back(vocab.tok_thought(static_cast<int>(obs.fields.phase) % vocab.n_thought));
  return t;
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  const VocabSpec& v = params.layout.vocab;
  json j;
  j["format_version"] = kFormatVersion;
  j["tool_version"] = kToolVersion;
  j["kind"] = "policy_checkpoint";
  j["vocab"] = {
      {"grid", v.grid},
      {"n_text", v.n_text},
      {"n_dur", v.n_dur},
      {"n_thought", v.n_thought},
      {"thought_budget", v.thought_budget},
      {"action_budget", v.action_budget},
      {"hash", v.hash()},
  };
  j["history_k"] = params.layout.history_k;
  j["temperature"] = params.temperature;
  j["rows"] = params.weights.rows;
  j["cols"] = params.weights.cols;
  j["weights"] = params.weights.data;

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out << j.dump() << "\n";
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  json j;
  in >> j;
  if (j.value("format_version", -1) != kFormatVersion || j.value("kind", "") != "policy_checkpoint") {
    throw ConfigError("not a policy checkpoint: " + path);
  }
  VocabSpec v;
  const json& vj = j.at("vocab");
  v.grid = vj.at("grid").get<int>();
  v.n_text = vj.at("n_text").get<int>();
  v.n_dur = vj.at("n_dur").get<int>();
  v.n_thought = vj.at("n_thought").get<int>();
  v.thought_budget = vj.at("thought_budget").get<int>();
  v.action_budget = vj.at("action_budget").get<int>();
  if (vj.at("hash").get<uint64_t>() != v.hash()) {
    throw ConfigError("checkpoint vocabulary hash mismatch: " + path);
  }
  PolicyParams p = make_params(v, j.at("history_k").get<int>(), j.at("temperature").get<double>());
  if (j.at("rows").get<int>() != p.weights.rows || j.at("cols").get<int>() != p.weights.cols) {
    throw ConfigError("checkpoint weight shape mismatch: " + path);
  }
  p.weights.data = j.at("weights").get<std::vector<double>>();
  return p;
}

}  // namespace semirl
