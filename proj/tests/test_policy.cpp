#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "semirl/errors.hpp"
#include "semirl/policy.hpp"

using namespace semirl;
using namespace semirl::test;
namespace fs = std::filesystem;

namespace {

PolicyParams random_params(double noise, uint64_t seed, double temperature = 1.0) {
  PolicyParams p = make_params(small_vocab(), 2, temperature);
  Rng rng(seed);
  for (double& w : p.weights.data) w = noise * rng.next_normal();
  return p;
}

Observation sample_obs() {
  ObsFields f;
  f.widget = Coord{2, 3};
  f.decoy = Coord{0, 1};
  f.cue_text = 4;
  f.phase = StepPhase::Act;
  f.instr_emb = {0.5, -0.5, 0.5, 0.5};
  return Observation{3, f};
}

HistoryWindow sample_window(const VocabSpec& v) {
  HistoryWindow win(2);
  ObsFields f1;
  f1.cue_text = 2;
  f1.phase = StepPhase::Act;
  win.push(HistoryEntry{Observation{1, f1}, click(1, 1), {v.tok_thought(0), v.tok_thought(3)}});
  ObsFields f2;
  f2.widget = Coord{4, 4};
  win.push(HistoryEntry{Observation{2, f2}, type_text(3), {}});
  return win;
}

}  // namespace

TEST_CASE("softmax head reproduces the closed-form two-token case") {
  // Logits (0, ln 3) -> probabilities (0.25, 0.75).
  Matrix w(2, 1);
  w.at(0, 0) = 0.0;
  w.at(1, 0) = std::log(3.0);
  std::vector<double> ctx = {1.0};
  std::vector<double> lp;
  compute_logprobs(w, ctx, 1.0, lp);
  CHECK(std::abs(std::exp(lp[0]) - 0.25) < 1e-12);
  CHECK(std::abs(std::exp(lp[1]) - 0.75) < 1e-12);

  // Entropy of (0.25, 0.75) in nats.
  const double h = entropy_from_logprobs(lp);
  const double expected = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
  CHECK(std::abs(h - expected) < 1e-12);
  CHECK(h == doctest::Approx(0.5623).epsilon(1e-3));
}

TEST_CASE("next-token probabilities normalize for every context") {
  const PolicyParams p = random_params(0.7, 21);
  const Observation obs = sample_obs();
  const HistoryWindow win = sample_window(p.layout.vocab);
  Rng rng(5);
  const Response r = sample_response(p, obs, win, rng);

  std::vector<double> ctx = p.layout.build_base(obs, win, nullptr);
  GrammarCursor cur(p.layout.vocab);
  std::vector<double> lp;
  for (size_t k = 0; k < r.token_ids.size(); ++k) {
    p.layout.write_decode(ctx, static_cast<int>(k), cur.state(), cur.role());
    compute_logprobs(p.weights, ctx, p.temperature, lp);
    double sum = 0.0;
    for (double x : lp) sum += std::exp(x);
    CHECK(std::abs(sum - 1.0) < 1e-9);
    cur.advance(r.token_ids[k]);
  }
}

TEST_CASE("entropy limits") {
  // Uniform over V=4 -> ln 4; saturated -> ~0.
  Matrix w(4, 1);
  std::vector<double> ctx = {1.0};
  std::vector<double> lp;
  compute_logprobs(w, ctx, 1.0, lp);
  CHECK(std::abs(entropy_from_logprobs(lp) - std::log(4.0)) < 1e-12);

  w.at(0, 0) = 60.0;
  compute_logprobs(w, ctx, 1.0, lp);
  CHECK(entropy_from_logprobs(lp) < 1e-9);
}

TEST_CASE("sampling is deterministic given the seed and greedy is argmax") {
  const PolicyParams p = random_params(0.5, 33);
  const Observation obs = sample_obs();
  const HistoryWindow win = sample_window(p.layout.vocab);

  Rng r1(99), r2(99);
  const Response a = sample_response(p, obs, win, r1);
  const Response b = sample_response(p, obs, win, r2);
  CHECK(a.token_ids == b.token_ids);
  CHECK(a.token_logprobs == b.token_logprobs);

  Rng r3(1), r4(2);
  const Response g1 = sample_response(p, obs, win, r3, /*greedy=*/true);
  const Response g2 = sample_response(p, obs, win, r4, /*greedy=*/true);
  CHECK(g1.token_ids == g2.token_ids);
}

TEST_CASE("recorded logprobs equal recomputed logprob_sequence bitwise") {
  const PolicyParams p = random_params(0.6, 12);
  const Observation obs = sample_obs();
  const HistoryWindow win = sample_window(p.layout.vocab);
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const Response r = sample_response(p, obs, win, rng);
    const std::vector<double> lp = logprob_sequence(p, obs, win, r.token_ids);
    REQUIRE(lp.size() == r.token_logprobs.size());
    for (size_t k = 0; k < lp.size(); ++k) CHECK(lp[k] == r.token_logprobs[k]);
  }
}

TEST_CASE("logprob_sequence rejects out-of-vocabulary tokens") {
  const PolicyParams p = random_params(0.1, 3);
  const std::vector<int> bad = {p.layout.vocab.size()};
  CHECK_THROWS_AS(logprob_sequence(p, sample_obs(), HistoryWindow(2), bad), VocabError);
}

TEST_CASE("zero weights sample the first token uniformly") {
  PolicyParams p = make_params(small_vocab(), 2, 1.0);
  const int v = p.layout.vocab.size();
  const Observation obs = sample_obs();
  const HistoryWindow win(2);

  const int n = 100000;
  std::vector<int> counts(v, 0);
  Rng rng(1234);
  for (int i = 0; i < n; ++i) {
    const Response r = sample_response(p, obs, win, rng);
    ++counts[r.token_ids[0]];
  }
  const double expect = 1.0 / v;
  const double sigma = std::sqrt(expect * (1.0 - expect) / n);
  for (int tok = 0; tok < v; ++tok) {
    const double freq = static_cast<double>(counts[tok]) / n;
    CHECK(std::abs(freq - expect) < 3.0 * sigma);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  const Observation obs = sample_obs();
  Rng case_rng(2024);
  for (int c = 0; c < 100; ++c) {
    const PolicyParams p = random_params(0.5, 1000 + c);
    const HistoryWindow win = sample_window(p.layout.vocab);
    Rng rng(50 + c);
    const Response resp = sample_response(p, obs, win, rng);
    const Matrix g = grad_logprob(p, obs, win, resp.token_ids);

    auto loglik = [&](const PolicyParams& q) {
      double s = 0.0;
      for (double lp : logprob_sequence(q, obs, win, resp.token_ids)) s += lp;
      return s;
    };

    const double h = 1e-5;
    for (int probe = 0; probe < 8; ++probe) {
      const int idx = case_rng.next_int(static_cast<int>(p.weights.data.size()));
      PolicyParams plus = p, minus = p;
      plus.weights.data[idx] += h;
      minus.weights.data[idx] -= h;
      const double fd = (loglik(plus) - loglik(minus)) / (2.0 * h);
      const double an = g.data[idx];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      CHECK(std::abs(fd - an) / denom < 1e-4);
    }
  }
}

TEST_CASE("gradient of a saturated token is near zero") {
  PolicyParams p = make_params(small_vocab(), 2, 1.0);
  const int tok = p.layout.vocab.tok_think_open();
  // Drive p(tok) -> 1 through the bias column.
  p.weights.at(tok, 0) = 80.0;
  const std::vector<int> seq = {tok};
  const Matrix g = grad_logprob(p, sample_obs(), HistoryWindow(2), seq);
  for (double x : g.data) CHECK(std::abs(x) < 1e-9);
}

TEST_CASE("sequence gradient is the sum of per-token gradients") {
  const PolicyParams p = random_params(0.4, 77);
  const Observation obs = sample_obs();
  const HistoryWindow win = sample_window(p.layout.vocab);
  Rng rng(3);
  const Response r = sample_response(p, obs, win, rng);
  REQUIRE(r.token_ids.size() >= 2);

  const Matrix full = grad_logprob(p, obs, win, r.token_ids);
  Matrix sum(full.rows, full.cols);
  Matrix prev(full.rows, full.cols);
  for (size_t k = 1; k <= r.token_ids.size(); ++k) {
    const std::vector<int> prefix(r.token_ids.begin(), r.token_ids.begin() + k);
    const Matrix g = grad_logprob(p, obs, win, prefix);
    for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += g.data[i] - prev.data[i];
    prev = g;
  }
  for (size_t i = 0; i < sum.data.size(); ++i) CHECK(sum.data[i] == doctest::Approx(full.data[i]).epsilon(1e-12));
}

TEST_CASE("history window keeps at most K entries, evicting the oldest") {
  HistoryWindow win(2);
  for (int i = 0; i < 4; ++i) {
    ObsFields f;
    win.push(HistoryEntry{Observation{i, f}, click(i % 5, 0), {}});
  }
  CHECK(win.size() == 2);
  CHECK(win.entry(0).obs.state_id == 3);
  CHECK(win.entry(1).obs.state_id == 2);
}

TEST_CASE("on-policy patch thought stays in the thought vocabulary and is greedy-deterministic") {
  const PolicyParams p = random_params(0.5, 8);
  const VocabSpec& v = p.layout.vocab;
  const Observation obs = sample_obs();
  const HistoryWindow win = sample_window(v);
  Rng r1(4), r2(4);

  const auto t1 = onpolicy_patch_thought(p, click(1, 2), obs, win, r1);
  const auto t2 = onpolicy_patch_thought(p, click(1, 2), obs, win, r2);
  CHECK(t1 == t2);
  CHECK(static_cast<int>(t1.size()) <= v.thought_budget);
  for (int tok : t1) CHECK(v.is_thought(tok));

  Rng g1(1), g2(2);
  CHECK(onpolicy_patch_thought(p, click(1, 2), obs, win, g1, true) ==
        onpolicy_patch_thought(p, click(1, 2), obs, win, g2, true));
}

TEST_CASE("changing the hint shifts the first-thought-token distribution") {
  const PolicyParams p = random_params(0.8, 91);
  const VocabSpec& v = p.layout.vocab;
  const Observation obs = sample_obs();
  const HistoryWindow win = sample_window(v);

  // Monte-Carlo estimate of the first-token distribution under two hints.
  const int n = 4000;
  const int bins = v.n_thought + 1;  // thought words plus "closed immediately"
  auto first_token_hist = [&](const Action& hint, uint64_t seed) {
    std::vector<double> hist(bins, 0.0);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
      const auto thought = onpolicy_patch_thought(p, hint, obs, win, rng);
      if (thought.empty()) {
        hist[bins - 1] += 1.0;
      } else {
        hist[thought[0] - v.tok_thought(0)] += 1.0;
      }
    }
    for (double& x : hist) x /= n;
    return hist;
  };

  const auto h1 = first_token_hist(click(0, 0), 555);
  const auto h2 = first_token_hist(terminate(), 556);
  double tv = 0.0;
  for (int i = 0; i < bins; ++i) tv += std::abs(h1[i] - h2[i]);
  tv *= 0.5;
  CHECK(tv > 0.02);
}

TEST_CASE("auxiliary thought template is deterministic and kind-distinct") {
  const VocabSpec v = small_vocab();
  const Observation obs = sample_obs();
  CHECK(auxiliary_thought(v, click(1, 2), obs) == auxiliary_thought(v, click(1, 2), obs));

  std::vector<std::vector<int>> seqs;
  for (int k = 0; k < kNumKinds; ++k) {
    Action a;
    a.kind = static_cast<ActionKind>(k);
    const auto t = auxiliary_thought(v, a, obs);
    CHECK(t[0] == v.tok_kind(a.kind));
    for (const auto& other : seqs) CHECK(t != other);
    seqs.push_back(t);
  }
}

TEST_CASE("expert oracle params greedily reproduce expert actions") {
  GenConfig g;
  g.seed = 31;
  g.count = 12;
  g.eval_count = 3;
  g.horizon_min = 2;
  const TaskSet ts = generate_tasks(g);
  const PolicyParams oracle = make_expert_oracle(small_vocab(), 2);

  for (const Task& task : ts.tasks) {
    HistoryWindow win(2);
    Rng rng(0);
    for (int t = 1; t <= task.horizon; ++t) {
      const Observation& obs = task.expert[t - 1].obs;
      const Response r = sample_response(oracle, obs, win, rng, /*greedy=*/true);
      REQUIRE(r.format_ok);
      CHECK(*r.action == task.expert[t - 1].action);
      win.push(HistoryEntry{obs, r.action, r.thought});
    }
  }
}

TEST_CASE("checkpoint save/load round trips and validates the vocabulary hash") {
  const PolicyParams p = random_params(0.3, 17, 0.8);
  const fs::path dir = fs::temp_directory_path() / "semirl_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "ckpt.json").string();
  save_checkpoint(p, path);
  const PolicyParams q = load_checkpoint(path);
  CHECK(q.temperature == p.temperature);
  CHECK(q.layout.history_k == p.layout.history_k);
  CHECK(q.weights.data == p.weights.data);

  // Corrupt the stored hash.
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::string needle = "\"hash\":";
  const size_t at = text.find(needle);
  REQUIRE(at != std::string::npos);
  text[at + needle.size() + 1] = '9';
  text[at + needle.size() + 2] = '9';
  std::ofstream out(path);
  out << text;
  out.close();
  CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
  fs::remove_all(dir);
}
