#include "aglb/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "aglb/errors.hpp"

namespace aglb::eval {
namespace {

using stimuli::Task;

const stimuli::Lexicon& lex() {
  static const stimuli::Lexicon l = stimuli::build_lexicon();
  return l;
}

lm::Checkpoint small_model(std::uint64_t seed = 3) {
  auto vocab = stimuli::corpus_vocabulary(lex());
  lm::ModelConfig cfg{vocab.size(), 6, 5, 2, seed};
  return lm::init_model(cfg, std::move(vocab), seed);
}

std::vector<stimuli::Trial> trials(Task t, std::size_t per_condition, std::uint64_t seed = 1) {
  std::vector<stimuli::Trial> out;
  for (const auto& c : stimuli::conditions_for(t)) {
    auto v = stimuli::expand(t, c, lex(), per_condition, seed);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

TEST(Metrics, Formula) {
  EXPECT_DOUBLE_EQ(success_probability(0.7, 0.2), 7.0 / 9.0);
  EXPECT_EQ(score(0.7, 0.2), 1);
  EXPECT_EQ(success_probability(0.3, 0.3), 0.5);
  EXPECT_EQ(score(0.3, 0.3), 0);
  EXPECT_EQ(score(0.2, 0.7), 0);
  EXPECT_THROW(success_probability(0.0, 0.0), NumericDomainError);
  EXPECT_THROW(success_probability(1.2, 0.1), NumericDomainError);
  EXPECT_THROW(success_probability(-0.1, 0.1), NumericDomainError);
}

TEST(Metrics, RandomizedContracts) {
  numerics::Rng rng(99);
  for (int k = 0; k < 10000; ++k) {
    const double pc = rng.uniform(), pw = rng.uniform() + 1e-300;
    const double sp = success_probability(pc, pw);
    EXPECT_GE(sp, 0.0);
    EXPECT_LE(sp, 1.0);
    EXPECT_EQ(sp > 0.5, score(pc, pw) == 1);
    const double c = rng.uniform(1e-3, 1.0);
    EXPECT_NEAR(success_probability(c * pc, c * pw), sp, 1e-12);
    // Scores survive a strictly monotone transform of both values.
    EXPECT_EQ(score(std::sqrt(pc), std::sqrt(pw)), score(pc, pw));
  }
}

TEST(ScoreTrial, MatchesNextWordDistribution) {
  const auto ckpt = small_model();
  const auto ts = trials(Task::LongNested, 2);
  for (const auto& t : ts)
    for (const char* role : {"main", "embedded"}) {
      const EvalRecord r = score_trial(ckpt, t, role);
      const auto& target = t.target(role);
      std::vector<lm::TokenId> prefix{ckpt.vocab.at(lm::kBoundaryToken)};
      for (std::size_t k = 0; k < target.position; ++k) prefix.push_back(ckpt.vocab.at(t.tokens[k]));
      const auto dist = lm::next_word_distribution(ckpt, prefix);
      EXPECT_NEAR(r.p_correct, dist[ckpt.vocab.at(target.correct)], 1e-14);
      EXPECT_NEAR(r.p_wrong, dist[ckpt.vocab.at(target.wrong)], 1e-14);
      EXPECT_EQ(r.role, role);
      EXPECT_EQ(r.condition, t.condition.features);
      EXPECT_EQ(r.score, r.p_correct > r.p_wrong ? 1 : 0);
    }
}

TEST(ScoreTrial, BiasOnlyModelHasKnownProbabilities) {
  auto ckpt = small_model();
  for (auto* m : {&ckpt.params.output_embedding}) m->fill(0.0);
  std::fill(ckpt.params.output_bias.begin(), ckpt.params.output_bias.end(), 0.0);
  const auto t = trials(Task::NounPPNumber, 1).front();
  const auto& target = t.target("main");
  ckpt.params.output_bias[ckpt.vocab.at(target.correct)] = std::log(3.0);
  // Logits are 0 except log 3, so the probabilities are 3/(V+2) and 1/(V+2).
  const double v = static_cast<double>(ckpt.vocab.size());
  const EvalRecord r = score_trial(ckpt, t, "main");
  EXPECT_NEAR(r.p_correct, 3.0 / (v + 2.0), 1e-15);
  EXPECT_NEAR(r.p_wrong, 1.0 / (v + 2.0), 1e-15);
  EXPECT_NEAR(r.success_probability, 0.75, 1e-15);
  // Equal logits tie and score 0.
  ckpt.params.output_bias[ckpt.vocab.at(target.correct)] = 0.0;
  const EvalRecord tie = score_trial(ckpt, t, "main");
  EXPECT_EQ(tie.success_probability, 0.5);
  EXPECT_EQ(tie.score, 0);
}

TEST(ScoreTrial, Errors) {
  const auto ckpt = small_model();
  auto t = trials(Task::NounPPNumber, 1).front();
  EXPECT_THROW(score_trial(ckpt, t, "embedded"), ArgumentError);
  t.targets[0].wrong = "conoscone";
  try {
    score_trial(ckpt, t, "main");
    FAIL();
  } catch (const VocabularyError& e) {
    EXPECT_NE(std::string(e.what()).find("conoscone"), std::string::npos);
  }
}

TEST(ScoreTrials, BatchEqualsSingleAndIsThreadInvariant) {
  const auto ckpt = small_model();
  const auto ts = trials(Task::ShortNested, 3);
  const auto serial = score_trials(ckpt, ts);
  const auto parallel = score_trials(ckpt, ts, {}, {}, 4);
  ASSERT_EQ(serial.size(), ts.size() * 2);
  for (std::size_t k = 0; k < serial.size(); ++k) {
    EXPECT_EQ(to_json(serial[k]), to_json(parallel[k]));
    const auto single = score_trial(ckpt, ts[k / 2], serial[k].role);
    EXPECT_EQ(single.p_correct, serial[k].p_correct);
  }
  const lm::AblationMask mask({{1, 2}, {0, 4}});
  const auto masked = score_trials(ckpt, ts, "main", mask);
  EXPECT_EQ(masked.size(), ts.size());
  EXPECT_EQ(masked[0].mask, "0:4,1:2");
}

std::vector<EvalRecord> synthetic_records(Task task, const std::vector<int>& scores_per_cell) {
  std::vector<EvalRecord> out;
  std::size_t k = 0;
  for (const auto& c : stimuli::conditions_for(task))
    for (const auto& role : stimuli::template_for(task).roles()) {
      for (int s = 0; s < 4; ++s) {
        EvalRecord r;
        r.trial_id = std::string(stimuli::task_name(task)) + ":" + c.features + ":" + std::to_string(s);
        r.task = std::string(stimuli::task_name(task));
        r.condition = c.features;
        r.role = role;
        r.score = s < scores_per_cell[k % scores_per_cell.size()] ? 1 : 0;
        r.p_correct = r.score ? 0.6 : 0.2;
        r.p_wrong = r.score ? 0.2 : 0.6;
        r.success_probability = success_probability(r.p_correct, r.p_wrong);
        out.push_back(r);
      }
      ++k;
    }
  return out;
}

TEST(Aggregate, BasicCounts) {
  const auto all_right = synthetic_records(Task::LongNested, {4});
  for (const auto& s : aggregate(all_right)) {
    EXPECT_EQ(s.error_rate, 0.0);
    EXPECT_EQ(s.n, 4u);
  }
  const auto half = synthetic_records(Task::NounPPNumber, {2});
  const auto groups = aggregate(half);
  ASSERT_EQ(groups.size(), 4u);
  for (const auto& s : groups) {
    EXPECT_EQ(s.accuracy, 0.5);
    EXPECT_NEAR(s.success_mean, 0.5, 1e-15);
    EXPECT_LE(s.ci_low, 0.5);
    EXPECT_GE(s.ci_high, 0.5);
    EXPECT_GE(s.ci_low, 0.0);
    EXPECT_LE(s.ci_high, 1.0);
  }
}

TEST(Aggregate, CongruenceSplitsLongNestedInHalf) {
  const auto records = synthetic_records(Task::LongNested, {4, 3, 2, 1});
  GroupingSpec spec;
  spec.keys = {GroupKey::Task, GroupKey::Congruence};
  const auto groups = aggregate(records, spec);
  ASSERT_EQ(groups.size(), 2u);
  // 4 conditions x 2 roles x 4 trials each.
  EXPECT_EQ(groups[0].n, 32u);
  EXPECT_EQ(groups[1].n, 32u);
  EXPECT_EQ(groups[0].congruence, "congruent");
  EXPECT_EQ(groups[1].congruence, "incongruent");
}

TEST(Aggregate, PartitionPermutationAndExactComplement) {
  auto records = synthetic_records(Task::LongNested, {4, 1, 3, 0, 2});
  const auto a = aggregate(records);
  std::size_t total = 0;
  for (const auto& s : a) {
    total += s.n;
    EXPECT_EQ(s.accuracy + s.error_rate, 1.0);
  }
  EXPECT_EQ(total, records.size());
  numerics::Rng rng(4);
  rng.shuffle(records);
  const auto b = aggregate(records);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(to_json(a[k]), to_json(b[k]));
}

TEST(Aggregate, EmptyGroupsAndAttractorFilter) {
  auto records = synthetic_records(Task::NounPPNumber, {3});
  std::erase_if(records, [](const EvalRecord& r) { return r.condition == "PS"; });
  const auto groups = aggregate(records);
  ASSERT_EQ(groups.size(), 4u);
  EXPECT_EQ(groups[2].condition, "PS");
  EXPECT_EQ(groups[2].n, 0u);
  EXPECT_FALSE(groups[2].defined);
  EXPECT_TRUE(to_json(groups[2])["accuracy"].is_null());

  const auto plural = aggregate(records, parse_grouping("task,condition,role,attractor=P"));
  ASSERT_EQ(plural.size(), 2u);
  EXPECT_EQ(plural[0].condition, "SP");
  EXPECT_EQ(plural[1].condition, "PP");
  EXPECT_EQ(plural[0].attractor, "P");
  EXPECT_THROW(parse_grouping("task,colour"), ArgumentError);
}

TEST(Aggregate, BootstrapIsSeeded) {
  const auto records = synthetic_records(Task::ShortNested, {1, 3});
  GroupingSpec spec;
  spec.seed = 5;
  spec.resamples = 20;  // few resamples so the quantiles depend on the draw
  const auto a = aggregate(records, spec), b = aggregate(records, spec);
  spec.seed = 6;
  const auto c = aggregate(records, spec);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].ci_low, b[k].ci_low);
    differs |= a[k].ci_low != c[k].ci_low || a[k].ci_high != c[k].ci_high;
  }
  EXPECT_TRUE(differs);
}

service::ResponseRecord response(const std::string& trial, service::PanelChoice choice,
                                 const std::string& participant = "p1") {
  service::ResponseRecord r;
  r.participant = participant;
  r.session = "s1";
  r.trial = trial;
  r.choice = choice;
  if (choice != service::PanelChoice::Timeout) r.panel_latency_ms = 400;
  r.correct_side = "left";
  r.timestamp = "2026-01-01T00:00:00Z";
  return r;
}

TEST(Human, ErrorDefinitions) {
  auto base = stimuli::expand(Task::ShortNested, stimuli::parse_condition(Task::ShortNested, "SP"),
                              lex(), 1, 2, {.with_object = true})[0];
  base.id = "b";
  const auto violation = stimuli::make_violation(base, "embedded");
  const auto filler = stimuli::make_filler(base, stimuli::FillerType::Infinitive, lex());
  const std::vector<stimuli::Trial> ts{base, violation, filler};
  using service::PanelChoice;

  const std::vector<service::ResponseRecord> rs{
      response(violation.id, PanelChoice::Incorrect), response(violation.id, PanelChoice::Correct, "p2"),
      response(base.id, PanelChoice::Incorrect),      response(base.id, PanelChoice::Correct, "p2"),
      response(filler.id, PanelChoice::Correct),      response(violation.id, PanelChoice::Timeout, "p3")};
  const HumanErrors obs = human_observations(rs, ts);
  ASSERT_EQ(obs.agreement.size(), 2u);
  EXPECT_FALSE(obs.agreement[0].error);
  EXPECT_TRUE(obs.agreement[1].error);
  EXPECT_EQ(obs.agreement[1].role, "embedded");
  ASSERT_EQ(obs.false_alarms.size(), 2u);
  EXPECT_TRUE(obs.false_alarms[0].error);
  EXPECT_FALSE(obs.false_alarms[1].error);
  EXPECT_EQ(obs.timeouts, 1u);
  EXPECT_EQ(obs.fillers, 1u);

  const HumanErrorRates rates = human_error_rates(rs, ts);
  for (const auto& s : rates.agreement)
    if (s.condition == "SP" && s.role == "embedded") {
      EXPECT_EQ(s.n, 2u);
      EXPECT_EQ(s.error_rate, 0.5);
    } else {
      EXPECT_EQ(s.n, 0u);
    }
  for (const auto& s : rates.false_alarms) {
    EXPECT_EQ(s.role, "*");
    if (s.condition == "SP") EXPECT_EQ(s.error_rate, 0.5);
  }

  const std::vector<service::ResponseRecord> stray{response("nope", PanelChoice::Correct)};
  EXPECT_THROW(human_observations(stray, ts), IntegrityError);
}

TEST(Output, CsvColumnsAndJsonRoundTrip) {
  const auto records = synthetic_records(Task::NounPPNumber, {2});
  std::ostringstream out;
  write_records_csv(out, records);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "trial_id,task,condition,role,p_correct,p_wrong,score,success_probability,mask");
  for (const auto& r : records) EXPECT_EQ(to_json(record_from_json(to_json(r))), to_json(r));
  const auto groups = aggregate(records);
  std::ostringstream s;
  write_summary_csv(s, groups);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')),
            "task,condition,congruence,role,attractor,n,accuracy,error_rate,success_mean,ci_low,"
            "ci_high");
  for (const auto& g : groups) EXPECT_EQ(to_json(summary_from_json(to_json(g))), to_json(g));
}

}  // namespace
}  // namespace aglb::eval
