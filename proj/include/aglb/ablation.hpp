#pragma once

// Single-unit ablation sweeps, z-scored effects and cumulative top-k studies.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aglb/lstm.hpp"
#include "aglb/stimuli.hpp"

namespace aglb::ablation {

using Scores = std::map<std::string, double>;  // keyed by condition label

struct ConditionScores {
  Scores accuracy;
  Scores success;  // mean success probability
};

// Per-condition accuracy of one target role. Trials must come from a single
// task (ArgumentError otherwise).
ConditionScores condition_scores(const lm::Checkpoint& ckpt, std::span<const stimuli::Trial> trials,
                                 const std::string& role, const lm::AblationMask& mask = {},
                                 std::size_t threads = 1);

struct ZScores {
  std::vector<double> z;
  double mean = 0.0;
  double sd = 0.0;  // population
  bool degenerate = false;  // sd == 0; every z is 0
};

// Throws ArgumentError for fewer than 2 values.
ZScores zscore(std::span<const double> deltas);

struct AblationEffect {
  lm::UnitId unit;
  Scores accuracy, delta, z;  // delta = ablated - full
  Scores success, success_delta, success_z;
};

struct SingleUnitStudy {
  std::string task;
  std::string role;
  std::vector<std::string> conditions;
  ConditionScores full;
  std::vector<AblationEffect> effects;  // sorted by (layer, index)
  std::map<std::string, bool> degenerate;
};

// One pass per recurrent unit with a singleton mask, parallel over units.
SingleUnitStudy single_unit_study(const lm::Checkpoint& ckpt, std::span<const stimuli::Trial> trials,
                                  const std::string& role, std::size_t threads = 1,
                                  lm::AblationMode mode = lm::AblationMode::HiddenAndCell);

struct RankedUnits {
  std::vector<std::string> criterion;  // conditions whose mean accuracy delta ranks units
  std::vector<lm::UnitId> units;       // most harmful first
  std::vector<double> scores;          // mean delta per unit, same order
  std::string tie_break = "ascending mean delta, ties by (layer, index) ascending";
};

// Throws ArgumentError for a criterion condition absent from the study.
RankedUnits rank_units(const SingleUnitStudy& study, const std::vector<std::string>& criterion);

struct TopKRow {
  std::size_t k = 0;
  std::string condition;
  double accuracy = 0.0;
  double success = 0.0;
};

// Rows for k = 0..k_max; k = 0 is the unmasked model. Throws ArgumentError
// when k_max exceeds the number of ranked units.
std::vector<TopKRow> topk_study(const lm::Checkpoint& ckpt, const RankedUnits& ranked,
                                std::size_t k_max, std::span<const stimuli::Trial> trials,
                                const std::string& role, std::size_t threads = 1,
                                lm::AblationMode mode = lm::AblationMode::HiddenAndCell);

// unit,layer,index,condition,accuracy,delta,z,success,success_delta,success_z
void write_effects_csv(std::ostream& out, const SingleUnitStudy& study, std::size_t hidden_dim);
// k,condition,accuracy,success
void write_topk_csv(std::ostream& out, std::span<const TopKRow> rows);
nlohmann::json to_json(const RankedUnits& r);
RankedUnits ranked_from_json(const nlohmann::json& j);

}  // namespace aglb::ablation
