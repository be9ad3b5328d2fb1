#include "semirl/serialize.hpp"

#include "semirl/errors.hpp"

namespace semirl {

using nlohmann::json;

json action_to_json(const Action& a) {
  json args = json::object();
  switch (a.kind) {
    case ActionKind::Click:
      args["coordinate"] = {a.coordinate.x, a.coordinate.y};
      break;
    case ActionKind::Swipe:
      args["coordinate"] = {a.coordinate.x, a.coordinate.y};
      args["coordinate2"] = {a.coordinate2.x, a.coordinate2.y};
      break;
    case ActionKind::TypeText:
    case ActionKind::Key:
    case ActionKind::Open:
    case ActionKind::Answer:
      args["text"] = a.text;
      break;
    case ActionKind::Wait:
      args["time"] = a.time;
      break;
    case ActionKind::Terminate:
      args["status"] = a.success ? "success" : "failure";
      break;
  }
  return json{{"kind", to_string(a.kind)}, {"args", args}};
}

Action action_from_json(const json& j) {
  Action a;
  const auto kind = kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw ConfigError("unknown action kind: " + j.at("kind").get<std::string>());
  a.kind = *kind;
  const json& args = j.at("args");
  switch (a.kind) {
    case ActionKind::Swipe:
      a.coordinate2.x = args.at("coordinate2").at(0).get<int>();
      a.coordinate2.y = args.at("coordinate2").at(1).get<int>();
      [[fallthrough]];
    case ActionKind::Click:
      a.coordinate.x = args.at("coordinate").at(0).get<int>();
      a.coordinate.y = args.at("coordinate").at(1).get<int>();
      break;
    case ActionKind::TypeText:
    case ActionKind::Key:
    case ActionKind::Open:
    case ActionKind::Answer:
      a.text = args.at("text").get<int>();
      break;
    case ActionKind::Wait:
      a.time = args.at("time").get<int>();
      break;
    case ActionKind::Terminate:
      a.success = args.at("status").get<std::string>() == "success";
      break;
  }
  return a;
}

json response_to_json(const Response& r) {
  json j;
  j["thought"] = r.thought;
  if (r.action.has_value()) {
    json a = action_to_json(*r.action);
    j["kind"] = a["kind"];
    j["args"] = a["args"];
  } else {
    j["kind"] = nullptr;
    j["args"] = json::object();
  }
  j["format_ok"] = r.format_ok;
  return j;
}

}  // namespace semirl
