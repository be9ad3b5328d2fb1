#pragma once

#include <json.hpp>

#include "semirl/vocab.hpp"

namespace semirl {

// Structured action record: {"kind": <name>, "args": {<name>: <value>}}.
nlohmann::json action_to_json(const Action& a);
Action action_from_json(const nlohmann::json& j);

// Structured response record: {thought: [int], kind, args, format_ok}.
nlohmann::json response_to_json(const Response& r);

}  // namespace semirl
