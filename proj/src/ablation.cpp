#include "aglb/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "aglb/errors.hpp"
#include "aglb/evaluation.hpp"

namespace aglb::ablation {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

stimuli::Task single_task(std::span<const stimuli::Trial> trials) {
  if (trials.empty()) throw ArgumentError("ablation: no trials");
  for (const auto& t : trials)
    if (t.task != trials[0].task) throw ArgumentError("ablation: trials mix several tasks");
  return trials[0].task;
}

}  // namespace

ConditionScores condition_scores(const lm::Checkpoint& ckpt, std::span<const stimuli::Trial> trials,
                                 const std::string& role, const lm::AblationMask& mask,
                                 std::size_t threads) {
  single_task(trials);
  const auto records = eval::score_trials(ckpt, trials, role, mask, threads);
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  std::map<std::string, double> success;
  for (const auto& r : records) {
    auto& [n, correct] = counts[r.condition];
    ++n;
    correct += static_cast<std::size_t>(r.score);
    success[r.condition] += r.success_probability;
  }
  ConditionScores out;
  for (const auto& [cond, nc] : counts) {
    out.accuracy[cond] = static_cast<double>(nc.second) / static_cast<double>(nc.first);
    out.success[cond] = success[cond] / static_cast<double>(nc.first);
  }
  return out;
}

ZScores zscore(std::span<const double> deltas) {
  if (deltas.size() < 2) throw ArgumentError("zscore: need at least 2 effects");
  ZScores out;
  const double n = static_cast<double>(deltas.size());
  out.mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : deltas) ss += (d - out.mean) * (d - out.mean);
  out.sd = std::sqrt(ss / n);
  out.z.assign(deltas.size(), 0.0);
  const auto [lo, hi] = std::minmax_element(deltas.begin(), deltas.end());
  if (*lo == *hi) {
    out.mean = *lo;
    out.sd = 0.0;
    out.degenerate = true;
    return out;
  }
  for (std::size_t k = 0; k < deltas.size(); ++k) out.z[k] = (deltas[k] - out.mean) / out.sd;
  return out;
}

SingleUnitStudy single_unit_study(const lm::Checkpoint& ckpt, std::span<const stimuli::Trial> trials,
                                  const std::string& role, std::size_t threads,
                                  lm::AblationMode mode) {
  const stimuli::Task task = single_task(trials);
  SingleUnitStudy study;
  study.task = std::string(stimuli::task_name(task));
  study.role = role;
  study.full = condition_scores(ckpt, trials, role);
  for (const auto& c : stimuli::conditions_for(task))
    if (study.full.accuracy.count(c.features)) study.conditions.push_back(c.features);

  const std::size_t hidden = ckpt.config.hidden_dim;
  const std::size_t units = ckpt.config.num_layers * hidden;
  study.effects.resize(units);
  numerics::parallel_for(units, threads, [&](std::size_t u) {
    const lm::UnitId id{u / hidden, u % hidden};
    const ConditionScores s = condition_scores(ckpt, trials, role, lm::AblationMask({id}, mode));
    auto& e = study.effects[u];
    e.unit = id;
    e.accuracy = s.accuracy;
    e.success = s.success;
    for (const auto& c : study.conditions) {
      e.delta[c] = s.accuracy.at(c) - study.full.accuracy.at(c);
      e.success_delta[c] = s.success.at(c) - study.full.success.at(c);
    }
  });
  if (units >= 2) {
    for (const auto& c : study.conditions) {
      std::vector<double> d(units), sd(units);
      for (std::size_t u = 0; u < units; ++u) {
        d[u] = study.effects[u].delta.at(c);
        sd[u] = study.effects[u].success_delta.at(c);
      }
      const ZScores z = zscore(d), zs = zscore(sd);
      study.degenerate[c] = z.degenerate;
      for (std::size_t u = 0; u < units; ++u) {
        study.effects[u].z[c] = z.z[u];
        study.effects[u].success_z[c] = zs.z[u];
      }
    }
  }
  return study;
}

RankedUnits rank_units(const SingleUnitStudy& study, const std::vector<std::string>& criterion) {
  if (criterion.empty()) throw ArgumentError("rank_units: empty criterion");
  for (const auto& c : criterion)
    if (std::find(study.conditions.begin(), study.conditions.end(), c) == study.conditions.end())
      throw ArgumentError("rank_units: condition " + c + " not in study");
  std::vector<std::pair<double, lm::UnitId>> scored;
  for (const auto& e : study.effects) {
    double s = 0.0;
    for (const auto& c : criterion) s += e.delta.at(c);
    scored.push_back({s / static_cast<double>(criterion.size()), e.unit});
  }
  std::sort(scored.begin(), scored.end());
  RankedUnits r;
  r.criterion = criterion;
  for (const auto& [s, u] : scored) {
    r.units.push_back(u);
    r.scores.push_back(s);
  }
  return r;
}

std::vector<TopKRow> topk_study(const lm::Checkpoint& ckpt, const RankedUnits& ranked,
                                std::size_t k_max, std::span<const stimuli::Trial> trials,
                                const std::string& role, std::size_t threads,
                                lm::AblationMode mode) {
  if (k_max > ranked.units.size())
    throw ArgumentError("topk_study: k_max exceeds the number of ranked units");
  const stimuli::Task task = single_task(trials);
  std::vector<ConditionScores> per_k(k_max + 1);
  numerics::parallel_for(k_max + 1, threads, [&](std::size_t k) {
    const std::vector<lm::UnitId> units(ranked.units.begin(), ranked.units.begin() + k);
    per_k[k] = condition_scores(ckpt, trials, role, lm::AblationMask(units, mode));
  });
  std::vector<TopKRow> rows;
  for (std::size_t k = 0; k <= k_max; ++k)
    for (const auto& c : stimuli::conditions_for(task)) {
      const auto it = per_k[k].accuracy.find(c.features);
      if (it == per_k[k].accuracy.end()) continue;
      rows.push_back({k, c.features, it->second, per_k[k].success.at(c.features)});
    }
  return rows;
}

void write_effects_csv(std::ostream& out, const SingleUnitStudy& study, std::size_t hidden_dim) {
  out << "unit,layer,index,condition,accuracy,delta,z,success,success_delta,success_z\n";
  for (const auto& e : study.effects)
    for (const auto& c : study.conditions) {
      auto get = [&](const Scores& s) { return s.count(c) ? fmt(s.at(c)) : std::string("NA"); };
      out << e.unit.layer * hidden_dim + e.unit.index << ',' << e.unit.layer << ','
          << e.unit.index << ',' << c << ',' << get(e.accuracy) << ',' << get(e.delta) << ','
          << get(e.z) << ',' << get(e.success) << ',' << get(e.success_delta) << ','
          << get(e.success_z) << '\n';
    }
}

void write_topk_csv(std::ostream& out, std::span<const TopKRow> rows) {
  out << "k,condition,accuracy,success\n";
  for (const auto& r : rows)
    out << r.k << ',' << r.condition << ',' << fmt(r.accuracy) << ',' << fmt(r.success) << '\n';
}

nlohmann::json to_json(const RankedUnits& r) {
  nlohmann::json units = nlohmann::json::array();
  for (std::size_t k = 0; k < r.units.size(); ++k)
    units.push_back({{"layer", r.units[k].layer}, {"index", r.units[k].index}, {"score", r.scores[k]}});
  return {{"v", 1}, {"criterion", r.criterion}, {"tie_break", r.tie_break}, {"units", units}};
}

RankedUnits ranked_from_json(const nlohmann::json& j) {
  try {
    RankedUnits r;
    r.criterion = j.at("criterion").get<std::vector<std::string>>();
    r.tie_break = j.at("tie_break").get<std::string>();
    for (const auto& u : j.at("units")) {
      r.units.push_back({u.at("layer").get<std::size_t>(), u.at("index").get<std::size_t>()});
      r.scores.push_back(u.at("score").get<double>());
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed ranking: ") + e.what());
  }
}

}  // namespace aglb::ablation
