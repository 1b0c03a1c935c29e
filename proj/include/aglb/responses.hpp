#pragma once

// Human response records exchanged with the experiment UI.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace aglb::service {

enum class PanelChoice { Correct, Incorrect, Timeout };

std::string_view choice_name(PanelChoice c);

struct ResponseRecord {
  std::string participant;
  std::string session;
  std::string trial;
  bool detection = false;                     // "M" pressed during the sentence
  std::optional<double> detection_latency_ms; // from sentence onset; set iff detection
  std::size_t extra_presses = 0;
  PanelChoice choice = PanelChoice::Timeout;
  std::optional<double> panel_latency_ms;     // absent on timeout
  std::string correct_side;                   // "left" or "right"
  std::string timestamp;
  bool timing_flag = false;                   // frame timing outside tolerance

  friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

inline constexpr int kResponseVersion = 1;

nlohmann::json to_json(const ResponseRecord& r);
// Strict parse: every invalid, missing or unknown field is collected and
// reported together in a ValidationError.
ResponseRecord response_from_json(const nlohmann::json& j);

}  // namespace aglb::service
