#pragma once

#include "semirl/vocab.hpp"

namespace semirl {

// Gated composite step reward. r_t takes only the values {0, 0.1, 0.5, 1.0}.
struct StepReward {
  int r_format = 0;
  int r_type = 0;
  int r_acc = 0;
  double r_t = 0.0;
};

// Action-match predicate. Kinds must be equal; coordinate-pair arguments match
// within Chebyshev distance tol, every other argument matches exactly.
bool matches(const Action& a, const Action& b, int tol);

StepReward reward_components(const Response& resp, const Action& expert, int tol);

// r_t = 0.1*f + 0.4*[f=1]*t + 0.5*[f*t=1]*a, returned as an exact member of
// {0, 0.1, 0.5, 1.0}.
double composite_reward(int r_format, int r_type, int r_acc);

}  // namespace semirl
