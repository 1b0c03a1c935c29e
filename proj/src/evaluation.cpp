#include "aglb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "aglb/errors.hpp"

namespace aglb::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Probabilities of two tokens under softmax(logits).
std::pair<double, double> pair_probability(std::span<const double> logits, lm::TokenId a,
                                           lm::TokenId b) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  return {std::exp(logits[a] - m) / z, std::exp(logits[b] - m) / z};
}

EvalRecord make_record(const stimuli::Trial& trial, const stimuli::Target& target, double pc,
                       double pw, const std::string& mask) {
  EvalRecord r;
  r.trial_id = trial.id;
  r.task = std::string(stimuli::task_name(trial.task));
  r.condition = trial.condition.features;
  r.role = target.role;
  r.p_correct = pc;
  r.p_wrong = pw;
  r.score = score(pc, pw);
  r.success_probability = success_probability(pc, pw);
  r.mask = mask;
  return r;
}

}  // namespace

double success_probability(double p_correct, double p_wrong) {
  if (!(p_correct >= 0.0 && p_correct <= 1.0 && p_wrong >= 0.0 && p_wrong <= 1.0))
    throw NumericDomainError("success_probability: probabilities must lie in [0, 1]");
  if (p_correct == 0.0 && p_wrong == 0.0)
    throw NumericDomainError("success_probability: both probabilities are zero");
  return p_correct / (p_correct + p_wrong);
}

int score(double p_correct, double p_wrong) { return p_correct > p_wrong ? 1 : 0; }

std::string describe(const lm::AblationMask& mask) {
  if (mask.empty()) return "none";
  std::string out;
  for (const auto& u : mask.units()) {
    if (!out.empty()) out += ',';
    out += std::to_string(u.layer) + ":" + std::to_string(u.index);
  }
  if (mask.mode() == lm::AblationMode::HiddenOnly) out += "/h";
  return out;
}

std::vector<EvalRecord> score_trials(const lm::Checkpoint& ckpt,
                                     std::span<const stimuli::Trial> trials,
                                     std::string_view role, const lm::AblationMask& mask,
                                     std::size_t threads) {
  mask.validate(ckpt.config);
  const lm::TokenId eos = ckpt.vocab.at(lm::kBoundaryToken);
  const std::string mask_text = describe(mask);
  std::vector<std::vector<EvalRecord>> per_trial(trials.size());
  numerics::parallel_for(trials.size(), threads, [&](std::size_t k) {
    const stimuli::Trial& trial = trials[k];
    std::vector<const stimuli::Target*> targets;
    for (const auto& t : trial.targets)
      if (role.empty() || t.role == role) targets.push_back(&t);
    if (!role.empty() && targets.empty())
      throw ArgumentError("trial " + trial.id + " has no target " + std::string(role));
    std::vector<const stimuli::Target*> by_position = targets;
    std::sort(by_position.begin(), by_position.end(),
              [](const auto* a, const auto* b) { return a->position < b->position; });

    lm::Runner runner(ckpt, mask);
    runner.advance(eos);
    std::size_t consumed = 0;
    std::map<const stimuli::Target*, std::pair<double, double>> probs;
    for (const auto* t : by_position) {
      if (t->position >= trial.tokens.size())
        throw ArgumentError("trial " + trial.id + ": target beyond sentence end");
      for (; consumed < t->position; ++consumed) runner.advance(ckpt.vocab.at(trial.tokens[consumed]));
      const lm::Vector logits = runner.logits();
      probs[t] = pair_probability(logits, ckpt.vocab.at(t->correct), ckpt.vocab.at(t->wrong));
    }
    for (const auto* t : targets)
      per_trial[k].push_back(make_record(trial, *t, probs[t].first, probs[t].second, mask_text));
  });
  std::vector<EvalRecord> out;
  for (auto& v : per_trial)
    for (auto& r : v) out.push_back(std::move(r));
  return out;
}

EvalRecord score_trial(const lm::Checkpoint& ckpt, const stimuli::Trial& trial,
                       std::string_view role, const lm::AblationMask& mask) {
  if (!trial.has_target(role))
    throw ArgumentError("trial " + trial.id + " has no target " + std::string(role));
  return score_trials(ckpt, std::span(&trial, 1), role, mask).front();
}

GroupingSpec parse_grouping(std::string_view text) {
  GroupingSpec spec;
  spec.keys.clear();
  std::stringstream ss{std::string(text)};
  for (std::string part; std::getline(ss, part, ',');) {
    if (part == "task") spec.keys.push_back(GroupKey::Task);
    else if (part == "condition") spec.keys.push_back(GroupKey::Condition);
    else if (part == "congruence") spec.keys.push_back(GroupKey::Congruence);
    else if (part == "role") spec.keys.push_back(GroupKey::Role);
    else if (part.size() == 11 && part.starts_with("attractor=") &&
             std::string_view("SPMF").find(part[10]) != std::string_view::npos)
      spec.attractor = part[10];
    else
      throw ArgumentError("unknown grouping key '" + part + "'");
  }
  return spec;
}

std::string ConditionSummary::key() const {
  return "task=" + task + ";condition=" + condition + ";congruence=" + congruence +
         ";role=" + role + ";attractor=" + attractor;
}

namespace {

struct Item {
  std::string task, condition, role, id;
  bool correct = false;
  double success = kNaN;
};

std::string congruence_of(const std::string& condition) {
  return condition.size() >= 2 && condition[0] == condition[1] ? "congruent" : "incongruent";
}

ConditionSummary label(const GroupingSpec& spec, const std::string& task,
                       const std::string& condition, const std::string& role) {
  ConditionSummary s;
  for (GroupKey k : spec.keys) {
    switch (k) {
      case GroupKey::Task: s.task = task; break;
      case GroupKey::Condition:
        s.task = task;  // condition labels are only meaningful within a task
        s.condition = condition;
        break;
      case GroupKey::Congruence: s.congruence = congruence_of(condition); break;
      case GroupKey::Role: s.role = role; break;
    }
  }
  if (spec.attractor) s.attractor = std::string(1, *spec.attractor);
  return s;
}

bool attractor_matches(const GroupingSpec& spec, const std::string& task,
                       const std::string& condition) {
  if (!spec.attractor) return true;
  const auto c = stimuli::parse_condition(stimuli::parse_task(task), condition);
  const auto f = c.attractor_feature();
  return f && *f == *spec.attractor;
}

std::vector<ConditionSummary> aggregate_items(std::vector<Item> items, const GroupingSpec& spec,
                                              bool with_roles) {
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return std::tie(a.id, a.role) < std::tie(b.id, b.role);
  });
  std::vector<stimuli::Task> tasks;
  for (stimuli::Task t : stimuli::all_tasks())
    for (const auto& it : items)
      if (it.task == stimuli::task_name(t)) {
        tasks.push_back(t);
        break;
      }
  for (const auto& it : items) stimuli::parse_task(it.task);  // rejects unknown names

  std::vector<ConditionSummary> groups;
  std::map<std::string, std::size_t> index;
  auto group_of = [&](const ConditionSummary& s) {
    const auto [it, fresh] = index.emplace(s.key(), groups.size());
    if (fresh) groups.push_back(s);
    return it->second;
  };
  for (stimuli::Task t : tasks) {
    const std::string task(stimuli::task_name(t));
    std::vector<std::string> roles{""};
    if (with_roles) roles = stimuli::template_for(t).roles();
    for (const auto& c : stimuli::conditions_for(t)) {
      if (!attractor_matches(spec, task, c.features)) continue;
      for (const auto& role : roles) group_of(label(spec, task, c.features, role));
    }
  }
  std::vector<std::vector<const Item*>> members(groups.size());
  for (const auto& it : items) {
    if (!attractor_matches(spec, it.task, it.condition)) continue;
    const auto found = index.find(label(spec, it.task, it.condition, it.role).key());
    if (found == index.end()) continue;
    members[found->second].push_back(&it);
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& s = groups[g];
    const auto& m = members[g];
    s.n = m.size();
    if (m.empty()) {
      s.defined = false;
      s.accuracy = s.error_rate = s.success_mean = s.ci_low = s.ci_high = kNaN;
      continue;
    }
    s.defined = true;
    std::size_t correct = 0;
    double success = 0.0;
    for (const auto* it : m) {
      correct += it->correct ? 1 : 0;
      success += it->success;
    }
    s.accuracy = static_cast<double>(correct) / static_cast<double>(s.n);
    s.error_rate = 1.0 - s.accuracy;
    s.success_mean = success / static_cast<double>(s.n);
    if (spec.resamples == 0) {
      s.ci_low = s.ci_high = s.accuracy;
      continue;
    }
    numerics::Rng rng(numerics::derive_seed(spec.seed, fnv1a(s.key())));
    std::vector<double> means(spec.resamples);
    for (auto& mean : means) {
      std::size_t hits = 0;
      for (std::size_t k = 0; k < s.n; ++k) hits += m[rng.below(s.n)]->correct ? 1 : 0;
      mean = static_cast<double>(hits) / static_cast<double>(s.n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(means.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, means.size() - 1);
      return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    s.ci_low = quantile(0.025);
    s.ci_high = quantile(0.975);
  }
  return groups;
}

}  // namespace

std::vector<ConditionSummary> aggregate(std::span<const EvalRecord> records,
                                        const GroupingSpec& spec) {
  std::vector<Item> items;
  for (const auto& r : records)
    items.push_back({r.task, r.condition, r.role, r.trial_id, r.score == 1, r.success_probability});
  return aggregate_items(std::move(items), spec, true);
}

std::vector<ConditionSummary> aggregate(std::span<const stats::Observation> obs,
                                        const GroupingSpec& spec) {
  std::vector<Item> items;
  bool with_roles = false;
  for (const auto& o : obs) {
    items.push_back({o.task, o.condition, o.role, o.participant + "|" + o.item, !o.error, kNaN});
    with_roles |= !o.role.empty();
  }
  return aggregate_items(std::move(items), spec, with_roles);
}

std::vector<stats::Observation> to_observations(std::span<const EvalRecord> records,
                                                std::string_view participant) {
  std::vector<stats::Observation> out;
  for (const auto& r : records)
    out.push_back({r.task, r.condition, r.role, std::string(participant), r.trial_id, r.score == 0});
  return out;
}

HumanErrors human_observations(std::span<const service::ResponseRecord> responses,
                               std::span<const stimuli::Trial> trials) {
  std::map<std::string, const stimuli::Trial*> index;
  for (const auto& t : trials) index[t.id] = &t;
  HumanErrors out;
  for (const auto& r : responses) {
    const auto it = index.find(r.trial);
    if (it == index.end()) throw IntegrityError("response references unknown trial " + r.trial);
    const stimuli::Trial& t = *it->second;
    if (r.choice == service::PanelChoice::Timeout) {
      ++out.timeouts;
      continue;
    }
    if (t.grammaticality.starts_with("filler")) {
      ++out.fillers;
      continue;
    }
    stats::Observation o{std::string(stimuli::task_name(t.task)), t.condition.features, "",
                         r.participant, t.id, false};
    if (t.acceptable()) {
      o.error = r.choice == service::PanelChoice::Incorrect;
      out.false_alarms.push_back(std::move(o));
    } else {
      o.role = t.grammaticality.substr(std::string_view("violation-").size());
      o.error = r.choice == service::PanelChoice::Correct;
      out.agreement.push_back(std::move(o));
    }
  }
  return out;
}

HumanErrorRates human_error_rates(std::span<const service::ResponseRecord> responses,
                                  std::span<const stimuli::Trial> trials,
                                  const GroupingSpec& spec) {
  const HumanErrors obs = human_observations(responses, trials);
  HumanErrorRates out;
  out.agreement = aggregate(obs.agreement, spec);
  GroupingSpec fa = spec;
  std::erase(fa.keys, GroupKey::Role);
  out.false_alarms = aggregate(obs.false_alarms, fa);
  out.timeouts = obs.timeouts;
  out.fillers = obs.fillers;
  return out;
}

void write_records_csv(std::ostream& out, std::span<const EvalRecord> records) {
  out << "trial_id,task,condition,role,p_correct,p_wrong,score,success_probability,mask\n";
  for (const auto& r : records)
    out << r.trial_id << ',' << r.task << ',' << r.condition << ',' << r.role << ','
        << fmt(r.p_correct) << ',' << fmt(r.p_wrong) << ',' << r.score << ','
        << fmt(r.success_probability) << ",\"" << r.mask << "\"\n";
}

nlohmann::json to_json(const EvalRecord& r) {
  return {{"trial_id", r.trial_id}, {"task", r.task},
          {"condition", r.condition}, {"role", r.role},
          {"p_correct", r.p_correct}, {"p_wrong", r.p_wrong},
          {"score", r.score},       {"success_probability", r.success_probability},
          {"mask", r.mask}};
}

EvalRecord record_from_json(const nlohmann::json& j) {
  try {
    EvalRecord r;
    r.trial_id = j.at("trial_id").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.condition = j.at("condition").get<std::string>();
    r.role = j.at("role").get<std::string>();
    r.p_correct = j.at("p_correct").get<double>();
    r.p_wrong = j.at("p_wrong").get<double>();
    r.score = j.at("score").get<int>();
    r.success_probability = j.at("success_probability").get<double>();
    r.mask = j.at("mask").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed eval record: ") + e.what());
  }
}

void write_summary_csv(std::ostream& out, std::span<const ConditionSummary> rows) {
  out << "task,condition,congruence,role,attractor,n,accuracy,error_rate,success_mean,ci_low,"
         "ci_high\n";
  for (const auto& s : rows)
    out << s.task << ',' << s.condition << ',' << s.congruence << ',' << s.role << ','
        << s.attractor << ',' << s.n << ',' << fmt(s.accuracy) << ',' << fmt(s.error_rate) << ','
        << fmt(s.success_mean) << ',' << fmt(s.ci_low) << ',' << fmt(s.ci_high) << '\n';
}

nlohmann::json to_json(const ConditionSummary& s) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  return {{"task", s.task},
          {"condition", s.condition},
          {"congruence", s.congruence},
          {"role", s.role},
          {"attractor", s.attractor},
          {"n", s.n},
          {"defined", s.defined},
          {"accuracy", num(s.accuracy)},
          {"error_rate", num(s.error_rate)},
          {"success_mean", num(s.success_mean)},
          {"ci_low", num(s.ci_low)},
          {"ci_high", num(s.ci_high)}};
}

ConditionSummary summary_from_json(const nlohmann::json& j) {
  try {
    auto num = [&](const char* key) {
      return j.at(key).is_null() ? kNaN : j.at(key).get<double>();
    };
    ConditionSummary s;
    s.task = j.at("task").get<std::string>();
    s.condition = j.at("condition").get<std::string>();
    s.congruence = j.at("congruence").get<std::string>();
    s.role = j.at("role").get<std::string>();
    s.attractor = j.at("attractor").get<std::string>();
    s.n = j.at("n").get<std::size_t>();
    s.defined = j.at("defined").get<bool>();
    s.accuracy = num("accuracy");
    s.error_rate = num("error_rate");
    s.success_mean = num("success_mean");
    s.ci_low = num("ci_low");
    s.ci_high = num("ci_high");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed summary: ") + e.what());
  }
}

}  // namespace aglb::eval
