#pragma once

#include <stdexcept>
#include <string>

namespace semirl {

// Invalid configuration or input validation failure. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BoundsError : std::runtime_error {
  explicit BoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VocabError : std::runtime_error {
  explicit VocabError(const std::string& msg) : std::runtime_error(msg) {}
};

// A rollout group with no trainable tokens cannot produce an update.
struct DegenerateGroupError : std::runtime_error {
  explicit DegenerateGroupError(const std::string& msg) : std::runtime_error(msg) {}
};

// OLS fit is undefined (constant dependent variable, SS_tot = 0).
struct UndefinedCorrelationError : std::runtime_error {
  explicit UndefinedCorrelationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace semirl
