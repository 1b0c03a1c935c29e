#pragma once

// Model-vs-human comparison and standalone SVG plots.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aglb/ablation.hpp"
#include "aglb/evaluation.hpp"
#include "aglb/probing.hpp"

namespace aglb::report {

struct ErrorCell {
  std::size_t n = 0;
  std::size_t errors = 0;
  double rate = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // Wilson 95% interval on the error rate
};

// One cell of the comparison layout: nesting task x verb x subject congruence.
struct PanelRow {
  std::string task, role, congruence;
  std::optional<ErrorCell> model, human;
};

struct CheckItem {
  std::string name;
  std::optional<bool> model, human;
  std::optional<bool> differs;  // set when both sides are defined
};

struct ComparisonReport {
  bool human_present = false;
  std::vector<PanelRow> panels;
  // Aligned input rows (full-condition breakdown when grouped by condition).
  std::vector<eval::ConditionSummary> model_rows;
  std::vector<std::optional<eval::ConditionSummary>> human_rows;
  std::vector<CheckItem> checklist;
};

// Both sides must carry the same grouping; an empty human side marks the
// human panels absent. Throws AlignmentError on a grouping mismatch or a
// model group missing from the human side.
ComparisonReport compare_model_human(std::span<const eval::ConditionSummary> model,
                                     std::span<const eval::ConditionSummary> human);

ErrorCell wilson(std::size_t errors, std::size_t n);

nlohmann::json to_json(const ComparisonReport& r);
std::string to_text(const ComparisonReport& r);

// Grouped bars per nesting task and verb, congruent blue and incongruent red,
// model solid and human hatched, with 95% interval whiskers.
std::string svg_comparison(const ComparisonReport& r, const std::string& manifest_hash);
// Accuracy against k, one line per condition: red singular subject, blue
// plural subject, dashed when the attractor is incongruent.
std::string svg_topk(std::span<const ablation::TopKRow> rows, const std::string& manifest_hash);
// One panel per (unit, signal), one line per condition, same colour code.
std::string svg_traces(std::span<const probing::TraceSummary> traces,
                       const std::string& manifest_hash);
// Red singular, blue plural; bold feminine and italic masculine labels.
std::string svg_pca(const probing::EmbeddingProjection& p, const std::string& manifest_hash);

}  // namespace aglb::report
