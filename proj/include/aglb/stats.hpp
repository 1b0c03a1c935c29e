#pragma once

// t-tests, fixed-effects logistic regression and the contrast battery run
// over model and human error data.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aglb/numerics.hpp"
#include "json.hpp"

namespace aglb::stats {

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

// Welch (unpaired) or paired t-test. Throws ArgumentError when a sample has
// fewer than 2 values or paired lengths differ, UndefinedStatisticError when
// both samples have zero variance and equal means.
TTest t_test(std::span<const double> a, std::span<const double> b, bool paired = false);

struct BinomialTest {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double p_two_sided = 1.0;
  double p_greater = 1.0;  // H1: success rate above the null
  double p_less = 1.0;
};

// Exact binomial test against success probability p0.
BinomialTest binomial_test(std::size_t successes, std::size_t trials, double p0 = 0.5);

struct DesignMatrix {
  std::vector<std::string> names;
  numerics::Matrix x;  // n x names.size()
};

struct GlmFit {
  std::vector<std::string> names;
  numerics::Vector coef, se, z, p;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // after every accepted IRLS step
  bool converged = false;
  bool ridge = false;  // a singular information matrix needed the ridge fallback
  std::size_t iterations = 0;

  std::size_t index(std::string_view name) const;  // ArgumentError if absent
};

struct LogisticOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // on the max-norm of the score
  double ridge = 1e-6;
};

// Maximum likelihood by IRLS with step-halving. Throws ArgumentError for a
// constant-zero column or n <= columns, SeparationError naming the column on
// complete separation and ConvergenceError after max_iterations.
GlmFit logistic_fit(const DesignMatrix& design, std::span<const int> y,
                    const LogisticOptions& opt = {});

double log_likelihood(const DesignMatrix& design, std::span<const int> y,
                      std::span<const double> coef);

// Two-sided normal p-value for a z statistic.
double wald_p(double z);

// "< 1e-15" below the floor, otherwise %.3g.
std::string format_p(double p);

// One binary outcome from a model or a participant.
struct Observation {
  std::string task;
  std::string condition;
  std::string role;         // main or embedded
  std::string participant;  // participant id, or model id
  std::string item;         // trial id
  bool error = false;
};

struct ContrastSpec {
  bool participant_effects = true;  // add indicator columns when >1 participant
  double chance = 0.5;
};

struct ContrastTest {
  std::string name;
  std::string task;
  std::string role;
  std::string term;
  std::string method;     // "logistic", "haldane" (cell-count fallback) or "binomial"
  double estimate = 0.0;  // log-odds of error, or error rate for chance tests
  double statistic = 0.0;
  double p = 1.0;
  std::optional<double> p_one_sided;
  std::string direction;
  double raw_difference = 0.0;  // from cell means, same orientation as estimate
  std::string note;
};

struct CellSummary {
  std::string task, role, congruence;  // congruence: congruent / incongruent
  std::size_t n = 0;
  std::size_t errors = 0;
  double error_rate() const { return n ? static_cast<double>(errors) / n : 0.0; }
};

struct ContrastReport {
  std::string deviation_notice;
  std::vector<CellSummary> design;
  std::vector<ContrastTest> tests;
  bool below_chance = false;  // Long-Nested embedded incongruent error rate above chance
  double long_nested_embedded_incongruent_error = 0.0;
};

// Fixed battery over the nesting tasks: congruence main effect per task and
// verb; congruence x verb position (Short- and Long-Nested); congruence x
// embedded length (embedded verb, Short vs Long Nested); above-chance test on
// Long-Nested embedded incongruent. Throws IncompleteDesignError listing
// missing cells.
ContrastReport contrast_report(std::span<const Observation> obs, const ContrastSpec& spec = {});

nlohmann::json to_json(const GlmFit& fit);
nlohmann::json to_json(const ContrastReport& report);
std::string to_text(const ContrastReport& report);

extern const char* const kDeviationNotice;

}  // namespace aglb::stats
