#include "semirl/vocab.hpp"

#include <sstream>

namespace semirl {

namespace {

constexpr std::array<const char*, kNumKinds> kKindNames = {
    "click", "type_text", "swipe", "key", "open", "wait", "answer", "terminate"};

constexpr std::array<ArgRole, 2> kClickRoles = {ArgRole::CoordX1, ArgRole::CoordY1};
constexpr std::array<ArgRole, 4> kSwipeRoles = {ArgRole::CoordX1, ArgRole::CoordY1, ArgRole::CoordX2,
                                                ArgRole::CoordY2};
constexpr std::array<ArgRole, 1> kTextRoles = {ArgRole::Text};
constexpr std::array<ArgRole, 1> kTimeRoles = {ArgRole::Time};
constexpr std::array<ArgRole, 1> kStatusRoles = {ArgRole::Status};

}  // namespace

const char* to_string(ActionKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<ActionKind> kind_from_string(const std::string& name) {
  for (int i = 0; i < kNumKinds; ++i) {
    if (name == kKindNames[i]) return static_cast<ActionKind>(i);
  }
  return std::nullopt;
}

std::span<const ArgRole> arg_roles(ActionKind kind) {
  switch (kind) {
    case ActionKind::Click: return kClickRoles;
    case ActionKind::Swipe: return kSwipeRoles;
    case ActionKind::TypeText:
    case ActionKind::Key:
    case ActionKind::Open:
    case ActionKind::Answer: return kTextRoles;
    case ActionKind::Wait: return kTimeRoles;
    case ActionKind::Terminate: return kStatusRoles;
  }
  return {};
}

std::string VocabSpec::token_name(int tok) const {
  if (tok == tok_think_open()) return "<think>";
  if (tok == tok_think_close()) return "</think>";
  if (tok == tok_action_open()) return "<action>";
  if (tok == tok_action_close()) return "</action>";
  if (is_kind(tok)) return kKindNames[tok - 4];
  if (tok >= tok_xval(0) && tok < tok_xval(grid)) return "x" + std::to_string(tok - tok_xval(0));
  if (tok >= tok_yval(0) && tok < tok_yval(grid)) return "y" + std::to_string(tok - tok_yval(0));
  if (tok >= tok_text(0) && tok < tok_text(n_text)) return "txt" + std::to_string(tok - tok_text(0));
  if (tok >= tok_dur(0) && tok < tok_dur(n_dur)) return "dur" + std::to_string(tok - tok_dur(0));
  if (tok == tok_status(true)) return "success";
  if (tok == tok_status(false)) return "failure";
  if (is_thought(tok)) return "tht" + std::to_string(tok - tok_thought(0));
  return "?" + std::to_string(tok);
}

uint64_t VocabSpec::hash() const {
  std::ostringstream os;
  os << "vocab/v1:" << grid << ':' << n_text << ':' << n_dur << ':' << n_thought << ':' << thought_budget
     << ':' << action_budget;
  for (int i = 0; i < kNumKinds; ++i) os << ':' << kKindNames[i];
  return fnv1a(os.str());
}

std::optional<int> VocabSpec::value_for_role(ArgRole role, int tok) const {
  switch (role) {
    case ArgRole::CoordX1:
    case ArgRole::CoordX2:
      if (tok >= tok_xval(0) && tok < tok_xval(grid)) return tok - tok_xval(0);
      return std::nullopt;
    case ArgRole::CoordY1:
    case ArgRole::CoordY2:
      if (tok >= tok_yval(0) && tok < tok_yval(grid)) return tok - tok_yval(0);
      return std::nullopt;
    case ArgRole::Text:
      if (tok >= tok_text(0) && tok < tok_text(n_text)) return tok - tok_text(0);
      return std::nullopt;
    case ArgRole::Time:
      if (tok >= tok_dur(0) && tok < tok_dur(n_dur)) return tok - tok_dur(0);
      return std::nullopt;
    case ArgRole::Status:
      if (tok == tok_status(true)) return 1;
      if (tok == tok_status(false)) return 0;
      return std::nullopt;
    case ArgRole::None: return std::nullopt;
  }
  return std::nullopt;
}

int VocabSpec::token_for_role(ArgRole role, int value) const {
  switch (role) {
    case ArgRole::CoordX1:
    case ArgRole::CoordX2: return tok_xval(value);
    case ArgRole::CoordY1:
    case ArgRole::CoordY2: return tok_yval(value);
    case ArgRole::Text: return tok_text(value);
    case ArgRole::Time: return tok_dur(value);
    case ArgRole::Status: return tok_status(value != 0);
    case ArgRole::None: break;
  }
  return -1;
}

ArgRole GrammarCursor::role() const {
  if (state_ != DecodeState::InArgs) return ArgRole::None;
  return arg_roles(kind_)[arg_index_];
}

void GrammarCursor::advance(int token) {
  const VocabSpec& v = *vocab_;
  switch (state_) {
    case DecodeState::ExpectThinkOpen:
      state_ = (token == v.tok_think_open()) ? DecodeState::InThought : DecodeState::Invalid;
      break;
    case DecodeState::InThought:
      if (token == v.tok_think_close()) {
        state_ = DecodeState::ExpectActionOpen;
      } else if (!v.is_structural(token) && thought_len_ < v.thought_budget) {
        ++thought_len_;
      } else {
        state_ = DecodeState::Invalid;
      }
      break;
    case DecodeState::ExpectActionOpen:
      state_ = (token == v.tok_action_open()) ? DecodeState::ExpectKind : DecodeState::Invalid;
      break;
    case DecodeState::ExpectKind:
      if (v.is_kind(token)) {
        kind_ = static_cast<ActionKind>(token - 4);
        arg_index_ = 0;
        state_ = arg_roles(kind_).empty() ? DecodeState::ExpectActionClose : DecodeState::InArgs;
      } else {
        state_ = DecodeState::Invalid;
      }
      break;
    case DecodeState::InArgs:
      if (v.value_for_role(role(), token).has_value()) {
        ++arg_index_;
        if (arg_index_ == static_cast<int>(arg_roles(kind_).size())) state_ = DecodeState::ExpectActionClose;
      } else {
        state_ = DecodeState::Invalid;
      }
      break;
    case DecodeState::ExpectActionClose:
      state_ = (token == v.tok_action_close()) ? DecodeState::Done : DecodeState::Invalid;
      break;
    case DecodeState::Done:
    case DecodeState::Invalid:
      state_ = DecodeState::Invalid;
      break;
  }
}

TokenAnalysis analyze_tokens(const VocabSpec& vocab, std::span<const int> tokens) {
  TokenAnalysis out;
  out.state_before.reserve(tokens.size());
  out.role_before.reserve(tokens.size());

  GrammarCursor cur(vocab);
  Action action;
  for (int tok : tokens) {
    out.state_before.push_back(cur.state());
    out.role_before.push_back(cur.role());
    const DecodeState before = cur.state();
    cur.advance(tok);
    if (before == DecodeState::InThought && cur.state() == DecodeState::InThought) {
      out.thought.push_back(tok);
    }
    if (before == DecodeState::ExpectKind && cur.state() != DecodeState::Invalid) {
      action.kind = cur.kind();
    }
    if (before == DecodeState::InArgs && cur.state() != DecodeState::Invalid) {
      const ArgRole role = out.role_before.back();
      const int value = *vocab.value_for_role(role, tok);
      switch (role) {
        case ArgRole::CoordX1: action.coordinate.x = value; break;
        case ArgRole::CoordY1: action.coordinate.y = value; break;
        case ArgRole::CoordX2: action.coordinate2.x = value; break;
        case ArgRole::CoordY2: action.coordinate2.y = value; break;
        case ArgRole::Text: action.text = value; break;
        case ArgRole::Time: action.time = value; break;
        case ArgRole::Status: action.success = value != 0; break;
        case ArgRole::None: break;
      }
    }
  }

  out.format_ok = cur.state() == DecodeState::Done;
  if (out.format_ok) {
    out.action = action;
  } else {
    out.thought.clear();
  }
  return out;
}

std::vector<int> serialize_response_tokens(const VocabSpec& vocab, std::span<const int> thought,
                                           const Action& action) {
  std::vector<int> toks;
  toks.reserve(static_cast<size_t>(vocab.max_response_len()));
  toks.push_back(vocab.tok_think_open());
  for (int t : thought) toks.push_back(t);
  toks.push_back(vocab.tok_think_close());
  toks.push_back(vocab.tok_action_open());
  toks.push_back(vocab.tok_kind(action.kind));
  for (ArgRole role : arg_roles(action.kind)) {
    int value = 0;
    switch (role) {
      case ArgRole::CoordX1: value = action.coordinate.x; break;
      case ArgRole::CoordY1: value = action.coordinate.y; break;
      case ArgRole::CoordX2: value = action.coordinate2.x; break;
      case ArgRole::CoordY2: value = action.coordinate2.y; break;
      case ArgRole::Text: value = action.text; break;
      case ArgRole::Time: value = action.time; break;
      case ArgRole::Status: value = action.success ? 1 : 0; break;
      case ArgRole::None: break;
    }
    toks.push_back(vocab.token_for_role(role, value));
  }
  toks.push_back(vocab.tok_action_close());
  return toks;
}

// Only the schema fields of the kind enter the key, so semantically equal
// actions collide regardless of leftover fields.
uint64_t action_key(const Action& a) {
  uint64_t k = static_cast<uint64_t>(a.kind);
  switch (a.kind) {
    case ActionKind::Swipe:
      k = (k << 8) | static_cast<uint64_t>(a.coordinate2.x & 0xff);
      k = (k << 8) | static_cast<uint64_t>(a.coordinate2.y & 0xff);
      [[fallthrough]];
    case ActionKind::Click:
      k = (k << 8) | static_cast<uint64_t>(a.coordinate.x & 0xff);
      k = (k << 8) | static_cast<uint64_t>(a.coordinate.y & 0xff);
      break;
    case ActionKind::TypeText:
    case ActionKind::Key:
    case ActionKind::Open:
    case ActionKind::Answer:
      k = (k << 8) | static_cast<uint64_t>(a.text & 0xff);
      break;
    case ActionKind::Wait:
      k = (k << 8) | static_cast<uint64_t>(a.time & 0xff);
      break;
    case ActionKind::Terminate:
      k = (k << 1) | (a.success ? 1u : 0u);
      break;
  }
  return k;
}

Response make_injected_response(const VocabSpec& vocab, std::vector<int> thought, const Action& action) {
  Response r;
  r.token_ids = serialize_response_tokens(vocab, thought, action);
  r.thought = std::move(thought);
  r.action = action;
  r.format_ok = true;
  r.sampled = false;
  return r;
}

}  // namespace semirl
