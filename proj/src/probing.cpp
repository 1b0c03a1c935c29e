#include "aglb/probing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "aglb/errors.hpp"

namespace aglb::probing {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double max_abs_diff(const lm::LayerState& a, const lm::LayerState& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.h.size(); ++l)
    for (std::size_t k = 0; k < a.h[l].size(); ++k) {
      d = std::max(d, std::abs(a.h[l][k] - b.h[l][k]));
      d = std::max(d, std::abs(a.c[l][k] - b.c[l][k]));
    }
  return d;
}

// gates[t][layer], the state after consuming tokens[t]
std::vector<std::vector<lm::LayerGates>> run_trial(const lm::Checkpoint& ckpt,
                                                   const stimuli::Trial& trial,
                                                   const lm::AblationMask& mask) {
  lm::Runner runner(ckpt, mask);
  runner.advance(ckpt.vocab.at(lm::kBoundaryToken));
  std::vector<std::vector<lm::LayerGates>> out;
  out.reserve(trial.tokens.size());
  lm::GateRecord rec;
  for (const auto& tok : trial.tokens) {
    runner.advance(ckpt.vocab.at(tok), &rec);
    out.push_back(rec.layers);
  }
  return out;
}

std::vector<std::size_t> noun_positions(const stimuli::Trial& t) {
  const auto& tpl = stimuli::template_for(t.task);
  std::vector<std::size_t> pos(tpl.noun_count, 0);
  for (std::size_t p = 0; p < tpl.slots.size(); ++p)
    if (tpl.slots[p].kind == stimuli::SlotKind::Noun) pos[static_cast<std::size_t>(tpl.slots[p].ref)] = p;
  return pos;
}

void check_unit(const lm::ModelConfig& cfg, lm::UnitId u) {
  if (u.layer >= cfg.num_layers || u.index >= cfg.hidden_dim)
    throw ArgumentError("unit " + std::to_string(u.layer) + ":" + std::to_string(u.index) +
                        " outside the model");
}

double orient(double a, double direction) { return direction < 0 ? 1.0 - a : a; }

double direction_of(double a) {
  if (std::isnan(a) || a == 0.5) return 0.0;
  return a > 0.5 ? 1.0 : -1.0;
}

}  // namespace

std::string_view signal_name(Signal s) {
  switch (s) {
    case Signal::I: return "i";
    case Signal::F: return "f";
    case Signal::G: return "g";
    case Signal::O: return "o";
    case Signal::C: return "C";
    case Signal::H: return "h";
  }
  return "?";
}

Signal parse_signal(std::string_view name) {
  for (Signal s : {Signal::I, Signal::F, Signal::G, Signal::O, Signal::C, Signal::H})
    if (name == signal_name(s)) return s;
  if (name == "c") return Signal::C;
  throw ArgumentError("unknown signal '" + std::string(name) + "'");
}

double signal_value(const lm::LayerGates& g, Signal s, std::size_t index) {
  switch (s) {
    case Signal::I: return g.i[index];
    case Signal::F: return g.f[index];
    case Signal::G: return g.g[index];
    case Signal::O: return g.o[index];
    case Signal::C: return g.c[index];
    case Signal::H: return g.h[index];
  }
  return 0.0;
}

std::vector<TraceSummary> trace_conditions(const lm::Checkpoint& ckpt,
                                           std::span<const stimuli::Trial> trials,
                                           std::span<const lm::UnitId> units,
                                           const TraceOptions& opt) {
  for (const auto& u : units) check_unit(ckpt.config, u);
  opt.mask.validate(ckpt.config);

  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    std::pair<std::string, std::string> key{std::string(stimuli::task_name(trials[k].task)),
                                            trials[k].condition.features};
    auto& members = groups[key];
    if (members.empty()) keys.push_back(key);
    else if (trials[members.front()].tokens.size() != trials[k].tokens.size())
      throw AlignmentError("trials " + trials[members.front()].id + " and " + trials[k].id +
                           " of " + key.first + "/" + key.second + " differ in length");
    members.push_back(k);
  }

  // values[trial][unit * signals + signal][t]
  const std::size_t series = units.size() * opt.signals.size();
  std::vector<std::vector<std::vector<double>>> values(trials.size());
  numerics::parallel_for(trials.size(), opt.threads, [&](std::size_t k) {
    const auto gates = run_trial(ckpt, trials[k], opt.mask);
    auto& v = values[k];
    v.assign(series, std::vector<double>(gates.size()));
    for (std::size_t t = 0; t < gates.size(); ++t)
      for (std::size_t u = 0; u < units.size(); ++u)
        for (std::size_t s = 0; s < opt.signals.size(); ++s)
          v[u * opt.signals.size() + s][t] =
              signal_value(gates[t][units[u].layer], opt.signals[s], units[u].index);
  });

  std::vector<TraceSummary> out;
  for (const auto& key : keys) {
    const auto& members = groups[key];
    const std::size_t len = trials[members.front()].tokens.size();
    for (std::size_t u = 0; u < units.size(); ++u)
      for (std::size_t s = 0; s < opt.signals.size(); ++s) {
        TraceSummary ts;
        ts.task = key.first;
        ts.condition = key.second;
        ts.unit = units[u];
        ts.signal = opt.signals[s];
        ts.tokens = trials[members.front()].tokens;
        ts.n = members.size();
        ts.mean.assign(len, 0.0);
        std::vector<double> m2(len, 0.0);
        std::size_t count = 0;
        for (std::size_t k : members) {
          ++count;
          const auto& row = values[k][u * opt.signals.size() + s];
          for (std::size_t t = 0; t < len; ++t) {
            const double d = row[t] - ts.mean[t];
            ts.mean[t] += d / static_cast<double>(count);
            m2[t] += d * (row[t] - ts.mean[t]);
          }
        }
        ts.sd.assign(len, 0.0);
        if (count > 1)
          for (std::size_t t = 0; t < len; ++t)
            ts.sd[t] = std::sqrt(m2[t] / static_cast<double>(count - 1));
        out.push_back(std::move(ts));
      }
  }
  return out;
}

FixedPointReport fixed_point_check(const lm::Checkpoint& ckpt, lm::TokenId token,
                                   std::size_t max_steps, double tolerance,
                                   const lm::AblationMask& mask) {
  lm::Runner runner(ckpt, mask);
  FixedPointReport r;
  for (std::size_t s = 1; s <= max_steps; ++s) {
    const lm::LayerState before = runner.state();
    runner.advance(token);
    r.steps = s;
    r.last_delta = max_abs_diff(before, runner.state());
    if (r.last_delta < tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

double auc(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, int>> all;
  all.reserve(x.size() + y.size());
  for (double v : x) all.push_back({v, 1});
  for (double v : y) all.push_back({v, 0});
  std::sort(all.begin(), all.end());
  // Sum of average ranks of x.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second == 1) rank_sum += avg;
    i = j;
  }
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  return (rank_sum - nx * (nx + 1) / 2) / (nx * ny);
}

NumberSeparation number_separation(const lm::Checkpoint& ckpt,
                                   std::span<const stimuli::Trial> trials, lm::UnitId unit,
                                   Signal signal, std::size_t noun_index,
                                   const std::string& role, const lm::AblationMask& mask) {
  check_unit(ckpt.config, unit);
  if (trials.empty()) throw ArgumentError("number_separation: no trials");
  const stimuli::Task task = trials[0].task;
  if (task == stimuli::Task::NounPPGender)
    throw ArgumentError("number_separation: task has no number features");
  const auto& tpl = stimuli::template_for(task);
  if (noun_index >= tpl.noun_count) throw ArgumentError("number_separation: no such noun");
  const auto role_pos = tpl.position(role);
  if (!role_pos) throw ArgumentError("number_separation: task has no " + role + " target");
  const std::size_t from = noun_positions(trials[0])[noun_index];
  const std::size_t to = *role_pos;

  const std::size_t steps = to - from + 1;
  std::vector<std::vector<double>> plural(steps), singular(steps);
  std::vector<double> all_p, all_s;
  for (const auto& t : trials) {
    if (t.task != task) throw ArgumentError("number_separation: trials mix several tasks");
    const auto gates = run_trial(ckpt, t, mask);
    const bool is_plural = t.condition.features[noun_index] == 'P';
    for (std::size_t s = 0; s < steps; ++s) {
      const double v = signal_value(gates.at(from + s)[unit.layer], signal, unit.index);
      (is_plural ? plural : singular)[s].push_back(v);
      (is_plural ? all_p : all_s).push_back(v);
    }
  }
  NumberSeparation out;
  out.auc = auc(all_p, all_s);
  out.direction = direction_of(out.auc);
  out.min_auc = 1.0;
  for (std::size_t s = 0; s < steps; ++s) {
    out.step_auc.push_back(orient(auc(plural[s], singular[s]), out.direction));
    out.min_auc = std::min(out.min_auc, out.step_auc.back());
  }
  return out;
}

std::pair<double, bool> separation(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("separation: empty set");
  auto mean = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto ss = [](std::span<const double> v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
  };
  const double ma = mean(a), mb = mean(b);
  const double diff = std::abs(ma - mb);
  const std::size_t df = a.size() + b.size() - 2;
  const double pooled = df == 0 ? 0.0 : std::sqrt((ss(a, ma) + ss(b, mb)) / static_cast<double>(df));
  if (pooled == 0.0) {
    if (diff == 0.0) return {0.0, false};
    return {kSeparationCap, true};
  }
  return {std::min(diff / pooled, kSeparationCap), false};
}

ConnectivityRecord efferent_weights(const lm::Checkpoint& ckpt, lm::UnitId unit,
                                    std::span<const std::string> words_a,
                                    std::span<const std::string> words_b) {
  check_unit(ckpt.config, unit);
  if (unit.layer + 1 != ckpt.config.num_layers)
    throw ArgumentError("efferent weights exist only for top-layer units");
  if (words_a.empty() || words_b.empty()) throw ArgumentError("efferent_weights: empty word set");
  ConnectivityRecord r;
  r.unit = unit;
  r.words_a.assign(words_a.begin(), words_a.end());
  r.words_b.assign(words_b.begin(), words_b.end());
  for (const auto& w : words_a) r.weights_a.push_back(ckpt.params.output_embedding(ckpt.vocab.at(w), unit.index));
  for (const auto& w : words_b) r.weights_b.push_back(ckpt.params.output_embedding(ckpt.vocab.at(w), unit.index));
  std::tie(r.separation, r.perfect) = separation(r.weights_a, r.weights_b);
  r.effective_a.assign(r.weights_a.size(), 0.0);
  r.effective_b.assign(r.weights_b.size(), 0.0);
  return r;
}

std::pair<std::vector<std::string>, std::vector<std::string>> target_word_sets(
    const stimuli::Lexicon& lex, stimuli::Task task, const lm::Vocabulary& vocab) {
  std::vector<std::string> a, b;
  auto add = [&](std::vector<std::string>& v, const std::string& w) {
    if (vocab.contains(w) && std::find(v.begin(), v.end(), w) == v.end()) v.push_back(w);
  };
  if (task == stimuli::Task::NounPPGender) {
    for (const auto& adj : lex.adjectives) {
      add(a, adj.ms);
      add(b, adj.fs);
    }
  } else {
    for (const auto* group : {&lex.verbs, &lex.matrix_verbs})
      for (const auto& v : *group) {
        add(a, v.sg3);
        add(b, v.pl3);
      }
    add(a, lex.copula.sg3);
    add(b, lex.copula.pl3);
  }
  return {a, b};
}

std::vector<ConnectivityRecord> effective_efferent(const lm::Checkpoint& ckpt,
                                                   std::span<const lm::UnitId> units,
                                                   std::span<const stimuli::Trial> trials,
                                                   const std::string& role,
                                                   std::span<const std::string> words_a,
                                                   std::span<const std::string> words_b,
                                                   const lm::AblationMask& mask) {
  if (trials.empty()) throw ArgumentError("effective_efferent: no trials");
  mask.validate(ckpt.config);
  std::vector<ConnectivityRecord> out;
  for (const auto& u : units) out.push_back(efferent_weights(ckpt, u, words_a, words_b));

  std::vector<double> sums(units.size(), 0.0);
  const lm::TokenId eos = ckpt.vocab.at(lm::kBoundaryToken);
  for (const auto& t : trials) {
    const std::size_t pos = t.target(role).position;
    lm::Runner runner(ckpt, mask);
    runner.advance(eos);
    for (std::size_t p = 0; p < pos; ++p) runner.advance(ckpt.vocab.at(t.tokens.at(p)));
    for (std::size_t k = 0; k < units.size(); ++k)
      sums[k] += runner.state().h[units[k].layer][units[k].index];
  }
  for (std::size_t k = 0; k < units.size(); ++k) {
    auto& r = out[k];
    r.mean_h = sums[k] / static_cast<double>(trials.size());
    for (std::size_t j = 0; j < r.weights_a.size(); ++j) r.effective_a[j] = r.weights_a[j] * r.mean_h;
    for (std::size_t j = 0; j < r.weights_b.size(); ++j) r.effective_b[j] = r.weights_b[j] * r.mean_h;
    r.effective_separation = separation(r.effective_a, r.effective_b).first;
  }
  return out;
}

WordFeatures word_features(const stimuli::Lexicon& lex, std::string_view word) {
  using stimuli::Gender;
  auto g = [](Gender x) { return x == Gender::Masculine ? 'M' : 'F'; };
  for (const auto* group : {&lex.nouns, &lex.abstract_nouns, &lex.inanimate_nouns})
    for (const auto& n : *group) {
      if (word == n.singular) return {'S', g(n.gender)};
      if (word == n.plural) return {'P', g(n.gender)};
    }
  for (const auto* group : {&lex.verbs, &lex.matrix_verbs})
    for (const auto& v : *group) {
      if (word == v.sg3) return {'S', '?'};
      if (word == v.pl3) return {'P', '?'};
    }
  if (word == lex.copula.sg3) return {'S', '?'};
  if (word == lex.copula.pl3) return {'P', '?'};
  for (const auto& a : lex.adjectives) {
    if (word == a.ms) return {'S', 'M'};
    if (word == a.fs) return {'S', 'F'};
    if (word == a.mp) return {'P', 'M'};
    if (word == a.fp) return {'P', 'F'};
  }
  static const std::vector<std::pair<std::string, WordFeatures>> articles = {
      {"il", {'S', 'M'}}, {"lo", {'S', 'M'}}, {"l'", {'S', '?'}}, {"la", {'S', 'F'}},
      {"i", {'P', 'M'}},  {"gli", {'P', 'M'}}, {"le", {'P', 'F'}}};
  for (const auto& [art, f] : articles)
    if (word == art || word == stimuli::contract_a(art)) return f;
  return {};
}

EmbeddingProjection embedding_pca(const lm::Checkpoint& ckpt, const stimuli::Lexicon& lex,
                                  std::span<const std::string> words, EmbeddingSide side,
                                  std::size_t pc_x, std::size_t pc_y) {
  if (words.size() < 3) throw ArgumentError("embedding_pca: need at least 3 words");
  const lm::Matrix& table =
      side == EmbeddingSide::Input ? ckpt.params.input_embedding : ckpt.params.output_embedding;
  if (pc_x == 0 || pc_y == 0 || pc_x > table.cols() || pc_y > table.cols())
    throw ArgumentError("embedding_pca: principal component index out of range");
  lm::Matrix data(words.size(), table.cols());
  for (std::size_t r = 0; r < words.size(); ++r) {
    const auto row = table.row(ckpt.vocab.at(words[r]));
    std::copy(row.begin(), row.end(), data.row(r).begin());
  }
  const auto p = numerics::pca(data, std::max(pc_x, pc_y));
  EmbeddingProjection out;
  out.words.assign(words.begin(), words.end());
  for (const auto& w : words) out.features.push_back(word_features(lex, w));
  out.pc_x = pc_x;
  out.pc_y = pc_y;
  for (std::size_t r = 0; r < words.size(); ++r) {
    out.x.push_back(p.projections(r, pc_x - 1));
    out.y.push_back(p.projections(r, pc_y - 1));
  }
  out.variance_x = p.explained_variance[pc_x - 1];
  out.variance_y = p.explained_variance[pc_y - 1];
  return out;
}

ShortRangeReport find_short_range_units(const lm::Checkpoint& ckpt, const stimuli::Lexicon& lex,
                                        std::span<const stimuli::Trial> probe,
                                        const ShortRangeOptions& opt) {
  opt.mask.validate(ckpt.config);
  const std::size_t layers = ckpt.config.num_layers, hidden = ckpt.config.hidden_dim;
  const std::size_t units = layers * hidden;

  struct Sample {
    bool plural;
    std::size_t lag;  // 0 for noun contexts; 1 + lag for switch samples
    std::vector<double> h;
  };
  std::vector<std::vector<Sample>> per_trial(probe.size());
  numerics::parallel_for(probe.size(), opt.threads, [&](std::size_t k) {
    const auto& t = probe[k];
    if (t.task == stimuli::Task::NounPPGender)
      throw ArgumentError("short-range probe trials need number features");
    const auto gates = run_trial(ckpt, t, opt.mask);
    auto flat = [&](std::size_t step) {
      std::vector<double> h(units);
      for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t i = 0; i < hidden; ++i) h[l * hidden + i] = gates[step][l].h[i];
      return h;
    };
    const auto pos = noun_positions(t);
    for (std::size_t n = 0; n < pos.size(); ++n) {
      const bool plural = t.condition.features[n] == 'P';
      per_trial[k].push_back({plural, 0, flat(pos[n])});
      if (n > 0 && t.condition.features[n] != t.condition.features[n - 1])
        for (std::size_t lag = 0; lag <= 1; ++lag)
          if (pos[n] + lag < gates.size())
            per_trial[k].push_back({plural, 1 + lag, flat(pos[n] + lag)});
    }
  });

  std::size_t switches = 0;
  for (const auto& v : per_trial)
    for (const auto& s : v) switches += s.lag > 0;
  if (switches == 0) throw ArgumentError("short-range probe has no number switch");

  const auto [sg, pl] = target_word_sets(lex, stimuli::Task::NounPPNumber, ckpt.vocab);
  ShortRangeReport report;
  report.theta_auc = opt.theta_auc;
  report.theta_separation = opt.theta_separation;
  for (std::size_t u = 0; u < units; ++u) {
    ShortRangeDiagnostic d;
    d.unit = {u / hidden, u % hidden};
    std::vector<double> p[3], s[3];
    for (const auto& v : per_trial)
      for (const auto& smp : v) (smp.plural ? p : s)[smp.lag].push_back(smp.h[u]);
    const double a = auc(p[0], s[0]);
    d.direction = direction_of(a);
    d.number_auc = d.direction == 0.0 ? 0.5 : orient(a, d.direction);
    d.switch_auc = 0.5;
    if (d.direction != 0.0)
      for (int lag = 1; lag <= 2; ++lag) {
        const double sa = auc(p[lag], s[lag]);
        if (!std::isnan(sa)) d.switch_auc = std::max(d.switch_auc, orient(sa, d.direction));
      }
    if (d.unit.layer + 1 == layers && !sg.empty() && !pl.empty())
      d.separation = efferent_weights(ckpt, d.unit, sg, pl).separation;
    d.flagged = d.number_auc >= opt.theta_auc && d.switch_auc >= opt.theta_auc &&
                d.separation && *d.separation >= opt.theta_separation;
    if (d.flagged) report.flagged.push_back(d.unit);
    report.units.push_back(d);
  }
  return report;
}

std::vector<stimuli::Trial> short_range_probe(const stimuli::Lexicon& lex,
                                              std::size_t per_condition, std::uint64_t seed) {
  std::vector<stimuli::Trial> out;
  for (const auto& c : stimuli::conditions_for(stimuli::Task::NounPPNumber)) {
    auto v = stimuli::expand(stimuli::Task::NounPPNumber, c, lex, per_condition,
                             numerics::derive_seed(seed, out.size()));
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void write_traces_csv(std::ostream& out, std::span<const TraceSummary> traces,
                      std::size_t hidden_dim) {
  out << "task,condition,unit,signal,t,token,mean,sd\n";
  for (const auto& ts : traces)
    for (std::size_t t = 0; t < ts.mean.size(); ++t)
      out << ts.task << ',' << ts.condition << ',' << ts.unit.layer * hidden_dim + ts.unit.index
          << ',' << signal_name(ts.signal) << ',' << t << ",\"" << ts.tokens[t] << "\","
          << fmt(ts.mean[t]) << ',' << fmt(ts.sd[t]) << '\n';
}

void write_connectivity_csv(std::ostream& out, std::span<const ConnectivityRecord> records,
                            std::size_t hidden_dim) {
  out << "unit,layer,index,set,word,weight,mean_h,effective\n";
  for (const auto& r : records) {
    auto rows = [&](char set, const std::vector<std::string>& words, const std::vector<double>& w,
                    const std::vector<double>& e) {
      for (std::size_t k = 0; k < words.size(); ++k)
        out << r.unit.layer * hidden_dim + r.unit.index << ',' << r.unit.layer << ','
            << r.unit.index << ',' << set << ",\"" << words[k] << "\"," << fmt(w[k]) << ','
            << fmt(r.mean_h) << ',' << fmt(e[k]) << '\n';
    };
    rows('a', r.words_a, r.weights_a, r.effective_a);
    rows('b', r.words_b, r.weights_b, r.effective_b);
  }
}

void write_projection_csv(std::ostream& out, const EmbeddingProjection& p) {
  out << "word,number,gender,x,y\n";
  for (std::size_t k = 0; k < p.words.size(); ++k)
    out << '"' << p.words[k] << "\"," << p.features[k].number << ',' << p.features[k].gender
        << ',' << fmt(p.x[k]) << ',' << fmt(p.y[k]) << '\n';
}

nlohmann::json to_json(const ShortRangeReport& r) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& d : r.units) {
    nlohmann::json j = {{"layer", d.unit.layer},     {"index", d.unit.index},
                        {"number_auc", d.number_auc}, {"switch_auc", d.switch_auc},
                        {"direction", d.direction},   {"flagged", d.flagged}};
    j["separation"] = d.separation ? nlohmann::json(*d.separation) : nlohmann::json(nullptr);
    units.push_back(j);
  }
  nlohmann::json flagged = nlohmann::json::array();
  for (const auto& u : r.flagged) flagged.push_back({{"layer", u.layer}, {"index", u.index}});
  return {{"theta_auc", r.theta_auc}, {"theta_separation", r.theta_separation},
          {"flagged", flagged}, {"units", units}};
}

}  // namespace aglb::probing
