#include "aglb/responses.hpp"

#include <set>
#include <vector>

#include "aglb/errors.hpp"

namespace aglb::service {

std::string_view choice_name(PanelChoice c) {
  switch (c) {
    case PanelChoice::Correct: return "correct";
    case PanelChoice::Incorrect: return "incorrect";
    case PanelChoice::Timeout: return "timeout";
  }
  return "timeout";
}

nlohmann::json to_json(const ResponseRecord& r) {
  nlohmann::json j{{"v", kResponseVersion},
                   {"participant", r.participant},
                   {"session", r.session},
                   {"trial", r.trial},
                   {"detection", r.detection},
                   {"detection_latency_ms", nullptr},
                   {"extra_presses", r.extra_presses},
                   {"panel_choice", choice_name(r.choice)},
                   {"panel_latency_ms", nullptr},
                   {"correct_side", r.correct_side},
                   {"timestamp", r.timestamp},
                   {"timing_flag", r.timing_flag}};
  if (r.detection_latency_ms) j["detection_latency_ms"] = *r.detection_latency_ms;
  if (r.panel_latency_ms) j["panel_latency_ms"] = *r.panel_latency_ms;
  return j;
}

ResponseRecord response_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("response must be a JSON object", {"$"});
  std::vector<std::string> bad;
  static const std::set<std::string> known{
      "v",          "participant",      "session",      "trial",        "detection",
      "detection_latency_ms", "extra_presses", "panel_choice", "panel_latency_ms",
      "correct_side", "timestamp",      "timing_flag"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) bad.push_back(key);

  ResponseRecord r;
  if (!j.contains("v") || !j["v"].is_number_integer() || j["v"].get<int>() != kResponseVersion)
    bad.push_back("v");
  auto text = [&](const char* key, std::string& out) {
    if (j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty())
      out = j[key].get<std::string>();
    else
      bad.push_back(key);
  };
  text("participant", r.participant);
  text("session", r.session);
  text("trial", r.trial);
  text("timestamp", r.timestamp);

  if (j.contains("detection") && j["detection"].is_boolean())
    r.detection = j["detection"].get<bool>();
  else
    bad.push_back("detection");
  auto latency = [&](const char* key, std::optional<double>& out) {
    if (!j.contains(key) || j[key].is_null()) return;
    if (j[key].is_number() && j[key].get<double>() >= 0.0)
      out = j[key].get<double>();
    else
      bad.push_back(key);
  };
  latency("detection_latency_ms", r.detection_latency_ms);
  if (r.detection != r.detection_latency_ms.has_value() &&
      (bad.empty() || bad.back() != "detection_latency_ms"))
    bad.push_back("detection_latency_ms");

  if (j.contains("extra_presses")) {
    if (j["extra_presses"].is_number_unsigned())
      r.extra_presses = j["extra_presses"].get<std::size_t>();
    else
      bad.push_back("extra_presses");
  }

  const std::string choice =
      j.contains("panel_choice") && j["panel_choice"].is_string() ? j["panel_choice"].get<std::string>() : "";
  if (choice == "correct")
    r.choice = PanelChoice::Correct;
  else if (choice == "incorrect")
    r.choice = PanelChoice::Incorrect;
  else if (choice == "timeout")
    r.choice = PanelChoice::Timeout;
  else
    bad.push_back("panel_choice");
  const std::size_t before = bad.size();
  latency("panel_latency_ms", r.panel_latency_ms);
  if (bad.size() == before && !choice.empty() &&
      (r.choice == PanelChoice::Timeout) == r.panel_latency_ms.has_value())
    bad.push_back("panel_latency_ms");

  if (j.contains("correct_side") && j["correct_side"].is_string() &&
      (j["correct_side"] == "left" || j["correct_side"] == "right"))
    r.correct_side = j["correct_side"].get<std::string>();
  else
    bad.push_back("correct_side");

  if (j.contains("timing_flag")) {
    if (j["timing_flag"].is_boolean())
      r.timing_flag = j["timing_flag"].get<bool>();
    else
      bad.push_back("timing_flag");
  }
  if (!bad.empty()) {
    std::string msg = "invalid response fields:";
    for (const auto& b : bad) msg += " " + b;
    throw ValidationError(msg, bad);
  }
  return r;
}

}  // namespace aglb::service
