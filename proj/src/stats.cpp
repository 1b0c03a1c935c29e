#include "aglb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "aglb/errors.hpp"

namespace aglb::stats {

const char* const kDeviationNotice =
    "Deviation: random participant and item effects are approximated by fixed participant "
    "indicator columns; item ids are listed but not modelled.";

namespace {

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

TTest t_test(std::span<const double> a, std::span<const double> b, bool paired) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("t_test: each sample needs n >= 2");
  TTest r;
  if (paired) {
    if (a.size() != b.size()) throw ArgumentError("t_test: paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
    const double m = mean(d), v = sample_var(d, m);
    r.df = static_cast<double>(d.size() - 1);
    if (v == 0.0) {
      if (m == 0.0) throw UndefinedStatisticError("t_test: zero variance and zero mean difference");
      r.t = m > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    } else {
      r.t = m / std::sqrt(v / static_cast<double>(d.size()));
    }
    r.p = t_two_sided(r.t, r.df);
    return r;
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double qa = sample_var(a, ma) / na, qb = sample_var(b, mb) / nb;
  const double se2 = qa + qb;
  if (se2 == 0.0) {
    if (ma == mb) throw UndefinedStatisticError("t_test: both samples constant with equal means");
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.df = na + nb - 2.0;
    r.p = 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  r.p = t_two_sided(r.t, r.df);
  return r;
}

BinomialTest binomial_test(std::size_t successes, std::size_t trials, double p0) {
  if (trials == 0 || successes > trials || !(p0 > 0.0 && p0 < 1.0))
    throw ArgumentError("binomial_test: need 0 <= successes <= trials, trials > 0, 0 < p0 < 1");
  boost::math::binomial_distribution<double> dist(static_cast<double>(trials), p0);
  BinomialTest r{successes, trials};
  const double k = static_cast<double>(successes);
  r.p_greater = successes == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, k - 1.0));
  r.p_less = boost::math::cdf(dist, k);
  // Sum of outcomes no more likely than the observed one.
  const double observed = boost::math::pdf(dist, k) * (1.0 + 1e-7);
  double p = 0.0;
  for (std::size_t i = 0; i <= trials; ++i) {
    const double q = boost::math::pdf(dist, static_cast<double>(i));
    if (q <= observed) p += q;
  }
  r.p_two_sided = std::min(1.0, p);
  return r;
}

std::size_t GlmFit::index(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return k;
  throw ArgumentError("no term " + std::string(name) + " in fit");
}

double log_likelihood(const DesignMatrix& design, std::span<const int> y,
                      std::span<const double> coef) {
  double ll = 0.0;
  for (std::size_t r = 0; r < design.x.rows(); ++r) {
    const double eta = numerics::dot(design.x.row(r), coef);
    ll += y[r] * eta - softplus(eta);
  }
  return ll;
}

double wald_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

std::string format_p(double p) {
  if (p < 1e-15) return "< 1e-15";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", p);
  return buf;
}

GlmFit logistic_fit(const DesignMatrix& design, std::span<const int> y,
                    const LogisticOptions& opt) {
  const auto& x = design.x;
  const std::size_t n = x.rows(), p = x.cols();
  if (design.names.size() != p) throw ArgumentError("logistic_fit: names do not match columns");
  if (y.size() != n) throw ArgumentError("logistic_fit: outcome length does not match rows");
  if (n <= p) throw ArgumentError("logistic_fit: need more rows than columns");
  for (int v : y)
    if (v != 0 && v != 1) throw ArgumentError("logistic_fit: outcomes must be 0 or 1");

  for (std::size_t j = 0; j < p; ++j) {
    bool zero = true;
    for (std::size_t r = 0; r < n && zero; ++r) zero = x(r, j) == 0.0;
    if (zero) throw ArgumentError("logistic_fit: column " + design.names[j] + " is constant zero");
  }
  std::size_t ones = 0;
  for (int v : y) ones += static_cast<std::size_t>(v);
  for (std::size_t j = 0; j < p; ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    double max0 = -std::numeric_limits<double>::infinity(), min0 = -max0;
    double max1 = max0, min1 = min0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = x(r, j);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      if (y[r]) {
        max1 = std::max(max1, v);
        min1 = std::min(min1, v);
      } else {
        max0 = std::max(max0, v);
        min0 = std::min(min0, v);
      }
    }
    if (lo == hi) {
      if (ones == 0 || ones == n)
        throw SeparationError(design.names[j], "complete separation: all outcomes equal");
      continue;
    }
    if (ones > 0 && ones < n && (max0 < min1 || max1 < min0))
      throw SeparationError(design.names[j],
                            "complete separation by column " + design.names[j]);
  }

  GlmFit fit;
  fit.names = design.names;
  numerics::Vector beta(p, 0.0), mu(n), grad(p);
  numerics::Matrix info(p, p);
  auto score = [&](std::span<const double> b) {
    std::fill(grad.begin(), grad.end(), 0.0);
    info.fill(0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double m = numerics::sigmoid(numerics::dot(x.row(r), b));
      mu[r] = m;
      const double w = m * (1.0 - m);
      for (std::size_t i = 0; i < p; ++i) {
        grad[i] += (y[r] - m) * x(r, i);
        for (std::size_t j = 0; j <= i; ++j) info(i, j) += w * x(r, i) * x(r, j);
      }
    }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < i; ++j) info(j, i) = info(i, j);
    double g = 0.0;
    for (double v : grad) g = std::max(g, std::fabs(v));
    return g;
  };

  double ll = log_likelihood(design, y, beta);
  fit.log_likelihood_trace.push_back(ll);
  for (fit.iterations = 0;; ++fit.iterations) {
    const double gmax = score(beta);
    if (gmax < opt.tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.iterations == opt.max_iterations)
      throw ConvergenceError("logistic_fit: no convergence in " +
                             std::to_string(opt.max_iterations) + " iterations");
    numerics::Vector delta;
    if (!numerics::cholesky_solve(info, grad, delta)) {
      numerics::Matrix ridged = info;
      for (std::size_t i = 0; i < p; ++i) ridged(i, i) += opt.ridge;
      if (!numerics::cholesky_solve(ridged, grad, delta))
        throw ConvergenceError("logistic_fit: information matrix singular after ridge");
      fit.ridge = true;
    }
    // Step-halving keeps the log-likelihood non-decreasing.
    double step = 1.0;
    numerics::Vector trial(p);
    double next = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      for (std::size_t i = 0; i < p; ++i) trial[i] = beta[i] + step * delta[i];
      next = log_likelihood(design, y, trial);
      if (next >= ll) break;
    }
    if (!(next >= ll)) {
      // No ascent left at floating-point resolution.
      fit.converged = gmax < opt.tolerance * 1e3;
      if (!fit.converged) throw ConvergenceError("logistic_fit: line search failed");
      break;
    }
    beta = trial;
    ll = next;
    fit.log_likelihood_trace.push_back(ll);
    for (std::size_t i = 0; i < p; ++i)
      if (std::fabs(beta[i]) > 50.0)
        throw SeparationError(design.names[i], "coefficients diverge (separation) in " +
                                                   design.names[i]);
  }
  score(beta);
  fit.coef = beta;
  fit.log_likelihood = ll;

  numerics::Matrix cov;
  if (!numerics::cholesky_inverse(info, cov)) {
    numerics::Matrix ridged = info;
    for (std::size_t i = 0; i < p; ++i) ridged(i, i) += opt.ridge;
    if (!numerics::cholesky_inverse(ridged, cov))
      throw ConvergenceError("logistic_fit: information matrix singular at the optimum");
    fit.ridge = true;
  }
  fit.se.resize(p);
  fit.z.resize(p);
  fit.p.resize(p);
  std::size_t worst = p;
  for (std::size_t i = 0; i < p; ++i) {
    fit.se[i] = std::sqrt(cov(i, i));
    fit.z[i] = fit.coef[i] / fit.se[i];
    fit.p[i] = wald_p(fit.z[i]);
    // Quasi-complete separation: large coefficient with an exploding standard error.
    if (std::fabs(fit.coef[i]) > 10.0 && fit.se[i] > 100.0 &&
        (worst == p || fit.se[i] > fit.se[worst]))
      worst = i;
  }
  if (worst != p)
    throw SeparationError(design.names[worst],
                          "quasi-complete separation in " + design.names[worst]);
  return fit;
}

namespace {

bool congruent(const Observation& o) { return o.condition.size() >= 2 && o.condition[0] == o.condition[1]; }

const std::vector<std::string>& nesting_names() {
  static const std::vector<std::string> names{"Short-Successive", "Long-Successive",
                                               "Short-Nested", "Long-Nested"};
  return names;
}

struct Cell {
  double n = 0, e = 0;
  double logit(double add) const { return std::log((e + add) / (n - e + add)); }
  double var(double add) const { return 1.0 / (e + add) + 1.0 / (n - e + add); }
  bool degenerate() const { return e == 0 || e == n; }
};

// Factor columns for a fit: intercept, incongruent, optional second factor,
// interaction, participant indicators.
struct FitInput {
  DesignMatrix design;
  std::vector<int> y;
};

FitInput build(const std::vector<const Observation*>& rows, const std::string& factor,
               const std::function<bool(const Observation&)>& factor_on,
               const std::vector<std::string>& participants) {
  FitInput in;
  in.design.names = {"(intercept)", "incongruent"};
  if (!factor.empty()) {
    in.design.names.push_back(factor);
    in.design.names.push_back("incongruent:" + factor);
  }
  for (std::size_t k = 1; k < participants.size(); ++k)
    in.design.names.push_back("participant[" + participants[k] + "]");
  in.design.x = numerics::Matrix(rows.size(), in.design.names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Observation& o = *rows[r];
    auto& x = in.design.x;
    x(r, 0) = 1.0;
    x(r, 1) = congruent(o) ? 0.0 : 1.0;
    std::size_t col = 2;
    if (!factor.empty()) {
      x(r, 2) = factor_on(o) ? 1.0 : 0.0;
      x(r, 3) = x(r, 1) * x(r, 2);
      col = 4;
    }
    for (std::size_t k = 1; k < participants.size(); ++k, ++col)
      x(r, col) = o.participant == participants[k] ? 1.0 : 0.0;
    in.y.push_back(o.error ? 1 : 0);
  }
  return in;
}

std::string direction_of(double estimate, const char* positive, const char* negative) {
  if (estimate > 0) return positive;
  if (estimate < 0) return negative;
  return "none";
}

}  // namespace

ContrastReport contrast_report(std::span<const Observation> obs, const ContrastSpec& spec) {
  ContrastReport report;
  report.deviation_notice = kDeviationNotice;

  std::map<std::tuple<std::string, std::string, bool>, Cell> cells;
  for (const auto& o : obs) {
    auto& c = cells[{o.task, o.role, congruent(o)}];
    c.n += 1;
    c.e += o.error ? 1 : 0;
  }
  std::vector<std::string> missing;
  for (const auto& task : nesting_names())
    for (const char* role : {"main", "embedded"})
      for (bool cong : {true, false}) {
        const auto it = cells.find({task, role, cong});
        const std::string label =
            task + "/" + role + "/" + (cong ? "congruent" : "incongruent");
        if (it == cells.end() || it->second.n == 0) {
          missing.push_back(label);
          continue;
        }
        report.design.push_back({task, role, cong ? "congruent" : "incongruent",
                                 static_cast<std::size_t>(it->second.n),
                                 static_cast<std::size_t>(it->second.e)});
      }
  if (!missing.empty())
    throw IncompleteDesignError("contrast_report: missing design cells", missing);

  auto cell = [&](const std::string& task, const std::string& role, bool cong) {
    return cells.at({task, role, cong});
  };
  // Cell log-odds contrast with the Haldane correction when any cell is degenerate.
  auto cell_contrast = [](const std::vector<std::pair<Cell, double>>& weighted) {
    bool degenerate = false;
    for (const auto& [c, w] : weighted) degenerate |= c.degenerate();
    const double add = degenerate ? 0.5 : 0.0;
    double est = 0.0, var = 0.0;
    for (const auto& [c, w] : weighted) {
      est += w * c.logit(add);
      var += c.var(add);
    }
    return std::pair{est, var};
  };

  std::set<std::string> participant_set;
  for (const auto& o : obs) participant_set.insert(o.participant);
  const std::vector<std::string> all_participants(participant_set.begin(), participant_set.end());

  auto run = [&](ContrastTest test, const std::vector<const Observation*>& rows,
                 const std::string& factor, const std::function<bool(const Observation&)>& on,
                 const std::vector<std::pair<Cell, double>>& weighted) {
    std::set<std::string> present;
    for (const auto* o : rows) present.insert(o->participant);
    std::vector<std::string> participants;
    if (spec.participant_effects && present.size() > 1)
      participants.assign(present.begin(), present.end());
    const auto [raw, raw_var] = cell_contrast(weighted);
    test.raw_difference = raw;
    const FitInput in = build(rows, factor, on, participants);
    try {
      const GlmFit fit = logistic_fit(in.design, in.y);
      const std::size_t k = fit.index(test.term);
      test.method = "logistic";
      test.estimate = fit.coef[k];
      test.statistic = fit.z[k];
      test.p = fit.p[k];
      if (fit.ridge) test.note = "ridge fallback used";
    } catch (const SeparationError& e) {
      test.method = "haldane";
      test.estimate = raw;
      test.statistic = raw / std::sqrt(raw_var);
      test.p = wald_p(test.statistic);
      test.note = "separation in " + e.column() + "; Haldane-corrected cell log-odds";
    } catch (const ConvergenceError& e) {
      test.method = "haldane";
      test.estimate = raw;
      test.statistic = raw / std::sqrt(raw_var);
      test.p = wald_p(test.statistic);
      test.note = std::string("logistic fit failed (") + e.what() + "); Haldane-corrected cell log-odds";
    }
    return test;
  };

  for (const auto& task : nesting_names())
    for (const char* role : {"main", "embedded"}) {
      std::vector<const Observation*> rows;
      for (const auto& o : obs)
        if (o.task == task && o.role == role) rows.push_back(&o);
      ContrastTest t;
      t.name = "congruence";
      t.task = task;
      t.role = role;
      t.term = "incongruent";
      t = run(t, rows, "", {}, {{cell(task, role, false), 1.0}, {cell(task, role, true), -1.0}});
      t.direction = direction_of(t.estimate, "incongruent worse", "congruent worse");
      report.tests.push_back(t);
    }

  for (const std::string task : {"Short-Nested", "Long-Nested"}) {
    std::vector<const Observation*> rows;
    for (const auto& o : obs)
      if (o.task == task && (o.role == "main" || o.role == "embedded")) rows.push_back(&o);
    ContrastTest t;
    t.name = "congruence x verb-position";
    t.task = task;
    t.term = "incongruent:embedded";
    t = run(t, rows, "embedded", [](const Observation& o) { return o.role == "embedded"; },
            {{cell(task, "embedded", false), 1.0},
             {cell(task, "embedded", true), -1.0},
             {cell(task, "main", false), -1.0},
             {cell(task, "main", true), 1.0}});
    t.direction = direction_of(t.estimate, "congruence effect larger on embedded verb",
                               "congruence effect larger on main verb");
    report.tests.push_back(t);
  }

  {
    std::vector<const Observation*> rows;
    for (const auto& o : obs)
      if (o.role == "embedded" && (o.task == "Short-Nested" || o.task == "Long-Nested"))
        rows.push_back(&o);
    ContrastTest t;
    t.name = "congruence x embedded-length";
    t.task = "Short-Nested/Long-Nested";
    t.role = "embedded";
    t.term = "incongruent:long";
    t = run(t, rows, "long", [](const Observation& o) { return o.task == "Long-Nested"; },
            {{cell("Long-Nested", "embedded", false), 1.0},
             {cell("Long-Nested", "embedded", true), -1.0},
             {cell("Short-Nested", "embedded", false), -1.0},
             {cell("Short-Nested", "embedded", true), 1.0}});
    t.direction = direction_of(t.estimate, "congruence effect larger with long embedding",
                               "congruence effect larger with short embedding");
    report.tests.push_back(t);
  }

  {
    const Cell c = cell("Long-Nested", "embedded", false);
    const auto n = static_cast<std::size_t>(c.n), e = static_cast<std::size_t>(c.e);
    const BinomialTest b = binomial_test(n - e, n, 1.0 - spec.chance);
    ContrastTest t;
    t.name = "above-chance";
    t.task = "Long-Nested";
    t.role = "embedded";
    t.term = "incongruent";
    t.method = "binomial";
    t.estimate = c.e / c.n;
    t.statistic = static_cast<double>(n - e);
    t.p = b.p_two_sided;
    t.p_one_sided = b.p_greater;
    t.raw_difference = t.estimate - spec.chance;
    t.direction = t.estimate < spec.chance   ? "above chance"
                  : t.estimate > spec.chance ? "below chance"
                                             : "at chance";
    t.note = "one-sided p tests accuracy above chance";
    report.long_nested_embedded_incongruent_error = t.estimate;
    report.below_chance = t.estimate > spec.chance;
    report.tests.push_back(t);
  }
  return report;
}

nlohmann::json to_json(const GlmFit& fit) {
  nlohmann::json terms = nlohmann::json::array();
  for (std::size_t k = 0; k < fit.names.size(); ++k)
    terms.push_back({{"term", fit.names[k]},
                     {"coef", fit.coef[k]},
                     {"se", fit.se[k]},
                     {"z", fit.z[k]},
                     {"p", fit.p[k]},
                     {"p_text", format_p(fit.p[k])}});
  return {{"terms", terms},
          {"log_likelihood", fit.log_likelihood},
          {"converged", fit.converged},
          {"ridge", fit.ridge},
          {"iterations", fit.iterations}};
}

nlohmann::json to_json(const ContrastReport& report) {
  nlohmann::json design = nlohmann::json::array();
  for (const auto& c : report.design)
    design.push_back({{"task", c.task},
                      {"role", c.role},
                      {"congruence", c.congruence},
                      {"n", c.n},
                      {"errors", c.errors},
                      {"error_rate", c.error_rate()}});
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : report.tests) {
    nlohmann::json j{{"name", t.name},         {"task", t.task},
                     {"role", t.role},         {"term", t.term},
                     {"method", t.method},     {"estimate", t.estimate},
                     {"statistic", t.statistic}, {"p", t.p},
                     {"p_text", format_p(t.p)}, {"direction", t.direction},
                     {"raw_difference", t.raw_difference}, {"note", t.note}};
    if (t.p_one_sided) {
      j["p_one_sided"] = *t.p_one_sided;
      j["p_one_sided_text"] = format_p(*t.p_one_sided);
    }
    tests.push_back(j);
  }
  return {{"v", 1},
          {"deviation_notice", report.deviation_notice},
          {"design", design},
          {"tests", tests},
          {"below_chance", report.below_chance},
          {"long_nested_embedded_incongruent_error", report.long_nested_embedded_incongruent_error}};
}

std::string to_text(const ContrastReport& report) {
  std::ostringstream out;
  out << report.deviation_notice << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-9s %-12s %6s %6s %8s\n", "task", "role",
                "congruence", "n", "errors", "rate");
  out << line;
  for (const auto& c : report.design) {
    std::snprintf(line, sizeof line, "%-18s %-9s %-12s %6zu %6zu %8.4f\n", c.task.c_str(),
                  c.role.c_str(), c.congruence.c_str(), c.n, c.errors, c.error_rate());
    out << line;
  }
  out << '\n';
  for (const auto& t : report.tests) {
    out << t.name << " | " << t.task;
    if (!t.role.empty()) out << " | " << t.role;
    std::snprintf(line, sizeof line, " | %s est=%.4f stat=%.4f p=%s", t.method.c_str(),
                  t.estimate, t.statistic, format_p(t.p).c_str());
    out << line;
    if (t.p_one_sided) out << " p(one-sided)=" << format_p(*t.p_one_sided);
    out << " | " << t.direction;
    if (!t.note.empty()) out << " (" << t.note << ")";
    out << '\n';
  }
  out << "Long-Nested embedded incongruent below chance: " << (report.below_chance ? "yes" : "no")
      << '\n';
  return out.str();
}

}  // namespace aglb::stats
