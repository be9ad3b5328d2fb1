#include "semirl/action.hpp"

#include <cstdlib>

namespace semirl {

namespace {

bool coord_within(const Coord& a, const Coord& b, int tol) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol;
}

}  // namespace

bool matches(const Action& a, const Action& b, int tol) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case ActionKind::Click: return coord_within(a.coordinate, b.coordinate, tol);
    case ActionKind::Swipe:
      return coord_within(a.coordinate, b.coordinate, tol) &&
             coord_within(a.coordinate2, b.coordinate2, tol);
    case ActionKind::TypeText:
    case ActionKind::Key:
    case ActionKind::Open:
    case ActionKind::Answer: return a.text == b.text;
    case ActionKind::Wait: return a.time == b.time;
    case ActionKind::Terminate: return a.success == b.success;
  }
  return false;
}

StepReward reward_components(const Response& resp, const Action& expert, int tol) {
  StepReward r;
  if (!resp.format_ok || !resp.action.has_value()) {
    r.r_t = composite_reward(0, 0, 0);
    return r;
  }
  r.r_format = 1;
  r.r_type = resp.action->kind == expert.kind ? 1 : 0;
  r.r_acc = matches(*resp.action, expert, tol) ? 1 : 0;
  r.r_t = composite_reward(r.r_format, r.r_type, r.r_acc);
  return r;
}

double composite_reward(int r_format, int r_type, int r_acc) {
  if (r_format != 1) return 0.0;
  if (r_type != 1) return 0.1;
  if (r_acc != 1) return 0.5;
  return 1.0;
}

}  // namespace semirl
