#pragma once

// Scoring trials against a language model, grouped summaries with bootstrap
// confidence intervals, and human error rates from response records.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aglb/lstm.hpp"
#include "aglb/responses.hpp"
#include "aglb/stats.hpp"
#include "aglb/stimuli.hpp"

namespace aglb::eval {

struct EvalRecord {
  std::string trial_id;
  std::string task;
  std::string condition;
  std::string role;
  double p_correct = 0.0;
  double p_wrong = 0.0;
  int score = 0;
  double success_probability = 0.0;
  std::string mask = "none";
};

// p_correct / (p_correct + p_wrong). Throws NumericDomainError when either
// value is outside [0, 1] or both are zero.
double success_probability(double p_correct, double p_wrong);
// 1 iff p_correct > p_wrong; ties score 0.
int score(double p_correct, double p_wrong);

// "none", or units as "layer:index" joined by commas, with "/h" appended in
// hidden-only mode.
std::string describe(const lm::AblationMask& mask);

// Feeds <eos> followed by the tokens before the target and compares the
// probabilities of the correct and wrong forms. Throws ArgumentError for a
// missing role and VocabularyError for out-of-vocabulary forms.
EvalRecord score_trial(const lm::Checkpoint& ckpt, const stimuli::Trial& trial,
                       std::string_view role, const lm::AblationMask& mask = {});

// Every target of every trial (only `role` when non-empty), in trial order.
// Each trial is run once however many targets it has.
std::vector<EvalRecord> score_trials(const lm::Checkpoint& ckpt,
                                     std::span<const stimuli::Trial> trials,
                                     std::string_view role = {},
                                     const lm::AblationMask& mask = {}, std::size_t threads = 1);

enum class GroupKey { Task, Condition, Congruence, Role };

struct GroupingSpec {
  std::vector<GroupKey> keys{GroupKey::Task, GroupKey::Condition, GroupKey::Role};
  std::optional<char> attractor;  // keep only conditions whose attractor has this feature
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

// Comma-separated keys from {task, condition, congruence, role}, optionally
// followed by "attractor=S|P|M|F". Throws ArgumentError on anything else.
GroupingSpec parse_grouping(std::string_view text);

struct ConditionSummary {
  std::string task = "*";
  std::string condition = "*";
  std::string congruence = "*";  // congruent / incongruent
  std::string role = "*";
  std::string attractor = "*";
  std::size_t n = 0;
  bool defined = false;  // false when n == 0; means and CIs are then NaN
  double accuracy = 0.0;
  double error_rate = 0.0;
  double success_mean = 0.0;  // NaN for human data
  double ci_low = 0.0, ci_high = 0.0;  // bootstrap 95% interval on accuracy

  std::string key() const;
};

// Groups follow the full factorial of every task present (conditions x target
// roles); groups without records are emitted with n = 0.
std::vector<ConditionSummary> aggregate(std::span<const EvalRecord> records,
                                        const GroupingSpec& spec = {});
std::vector<ConditionSummary> aggregate(std::span<const stats::Observation> obs,
                                        const GroupingSpec& spec = {});

// Model records as binary error observations for the contrast battery.
std::vector<stats::Observation> to_observations(std::span<const EvalRecord> records,
                                                std::string_view participant);

struct HumanErrors {
  std::vector<stats::Observation> agreement;     // violation trials, error = missed violation
  std::vector<stats::Observation> false_alarms;  // acceptable trials, error = rejected
  std::size_t timeouts = 0;                      // excluded from both
  std::size_t fillers = 0;                       // excluded from both
};

// Throws IntegrityError when a response names an unknown trial.
HumanErrors human_observations(std::span<const service::ResponseRecord> responses,
                               std::span<const stimuli::Trial> trials);

struct HumanErrorRates {
  std::vector<ConditionSummary> agreement;
  std::vector<ConditionSummary> false_alarms;
  std::size_t timeouts = 0;
  std::size_t fillers = 0;
};

HumanErrorRates human_error_rates(std::span<const service::ResponseRecord> responses,
                                  std::span<const stimuli::Trial> trials,
                                  const GroupingSpec& spec = {});

// Fixed column order: trial_id,task,condition,role,p_correct,p_wrong,score,
// success_probability,mask
void write_records_csv(std::ostream& out, std::span<const EvalRecord> records);
nlohmann::json to_json(const EvalRecord& r);
EvalRecord record_from_json(const nlohmann::json& j);
// task,condition,congruence,role,attractor,n,accuracy,error_rate,success_mean,ci_low,ci_high
void write_summary_csv(std::ostream& out, std::span<const ConditionSummary> rows);
nlohmann::json to_json(const ConditionSummary& s);
ConditionSummary summary_from_json(const nlohmann::json& j);

}  // namespace aglb::eval
