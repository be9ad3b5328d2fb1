#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semirl/util.hpp"

namespace semirl {

enum class ActionKind : int {
  Click = 0,
  TypeText,
  Swipe,
  Key,
  Open,
  Wait,
  Answer,
  Terminate,
};
inline constexpr int kNumKinds = 8;

const char* to_string(ActionKind kind);
std::optional<ActionKind> kind_from_string(const std::string& name);

// Token role of an action argument slot. Coordinate pairs occupy two slots.
enum class ArgRole : int {
  CoordX1 = 0,
  CoordY1,
  CoordX2,
  CoordY2,
  Text,
  Time,
  Status,
  None,
};
inline constexpr int kNumArgRoles = 7;  // excludes None

// Ordered token roles for the argument slots of a kind.
std::span<const ArgRole> arg_roles(ActionKind kind);

// Token vocabulary over which responses are emitted. Fixed layout:
//   [0..4)                structural: <think> </think> <action> </action>
//   [4..12)               action kinds
//   then x-coordinate values, y-coordinate values, text ids, duration ticks,
//   terminate statuses, and thought words, in that order.
struct VocabSpec {
  int grid = 5;
  int n_text = 6;
  int n_dur = 3;
  int n_thought = 8;
  int thought_budget = 8;  // max tokens inside the think block
  int action_budget = 6;   // kind + args + </action>

  int size() const { return 4 + kNumKinds + 2 * grid + n_text + n_dur + 2 + n_thought; }
  // <think> + body + </think> + <action> + action part; generation stops at
  // </action> or this many tokens.
  int max_response_len() const { return 2 + thought_budget + 1 + action_budget; }

  int tok_think_open() const { return 0; }
  int tok_think_close() const { return 1; }
  int tok_action_open() const { return 2; }
  int tok_action_close() const { return 3; }
  int tok_kind(ActionKind k) const { return 4 + static_cast<int>(k); }
  int tok_xval(int v) const { return 4 + kNumKinds + v; }
  int tok_yval(int v) const { return 4 + kNumKinds + grid + v; }
  int tok_text(int v) const { return 4 + kNumKinds + 2 * grid + v; }
  int tok_dur(int v) const { return 4 + kNumKinds + 2 * grid + n_text + v; }
  int tok_status(bool success) const { return 4 + kNumKinds + 2 * grid + n_text + n_dur + (success ? 0 : 1); }
  int tok_thought(int v) const { return 4 + kNumKinds + 2 * grid + n_text + n_dur + 2 + v; }

  bool is_structural(int tok) const { return tok >= 0 && tok < 4; }
  bool is_kind(int tok) const { return tok >= 4 && tok < 4 + kNumKinds; }
  bool is_thought(int tok) const { return tok >= tok_thought(0) && tok < tok_thought(n_thought); }
  std::string token_name(int tok) const;

  // Hash of the layout parameters; checkpoints record it so a loaded policy
  // can be validated against the task set it is evaluated on.
  uint64_t hash() const;

  // Value of an argument token under a role, or nullopt if the token's class
  // does not fit the role.
  std::optional<int> value_for_role(ArgRole role, int tok) const;
  int token_for_role(ArgRole role, int value) const;
};

// Decoder/grammar state before emitting the next token.
enum class DecodeState : int {
  ExpectThinkOpen = 0,
  InThought,
  ExpectActionOpen,
  ExpectKind,
  InArgs,
  ExpectActionClose,
  Done,
  Invalid,
};
inline constexpr int kNumDecodeStates = 8;

// Incremental grammar walker shared by the sampler, the parser, and log-prob
// replay, so all three see bit-identical decode states.
class GrammarCursor {
 public:
  explicit GrammarCursor(const VocabSpec& vocab) : vocab_(&vocab) {}

  DecodeState state() const { return state_; }
  ArgRole role() const;  // role of the next expected token, None outside InArgs
  void advance(int token);

  ActionKind kind() const { return kind_; }
  int arg_index() const { return arg_index_; }
  int thought_len() const { return thought_len_; }

 private:
  const VocabSpec* vocab_;
  DecodeState state_ = DecodeState::ExpectThinkOpen;
  ActionKind kind_ = ActionKind::Click;
  int arg_index_ = 0;
  int thought_len_ = 0;
};

struct Coord {
  int x = 0;
  int y = 0;
  bool operator==(const Coord&) const = default;
};

// A structured agent action: kind plus the argument fields its schema uses.
struct Action {
  ActionKind kind = ActionKind::Click;
  Coord coordinate{};   // click, swipe
  Coord coordinate2{};  // swipe end point
  int text = 0;         // type_text, key, open, answer
  int time = 0;         // wait duration ticks
  bool success = true;  // terminate status

  bool operator==(const Action&) const = default;
};

// Dense packing for transition-table keys.
uint64_t action_key(const Action& a);

// Result of parsing a token stream against the response grammar.
struct TokenAnalysis {
  bool format_ok = false;
  std::vector<int> thought;
  std::optional<Action> action;
  // Decode state and arg role in effect *before* each position (same contexts
  // the sampler saw).
  std::vector<DecodeState> state_before;
  std::vector<ArgRole> role_before;
};

TokenAnalysis analyze_tokens(const VocabSpec& vocab, std::span<const int> tokens);

// Canonical token serialization: <think> thought </think> <action> kind args </action>.
std::vector<int> serialize_response_tokens(const VocabSpec& vocab, std::span<const int> thought,
                                           const Action& action);

// A policy output: raw tokens plus their parse. token_logprobs is populated
// only when the response was sampled; injected content carries none.
struct Response {
  std::vector<int> token_ids;
  std::vector<double> token_logprobs;
  std::vector<int> thought;
  std::optional<Action> action;
  bool format_ok = false;
  bool sampled = false;
  double entropy_sum = 0.0;  // sum of next-token entropies at sampled positions
};

Response make_injected_response(const VocabSpec& vocab, std::vector<int> thought, const Action& action);

}  // namespace semirl
