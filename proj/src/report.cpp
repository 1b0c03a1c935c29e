#include "aglb/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "aglb/errors.hpp"

namespace aglb::report {

namespace {

constexpr const char* kRed = "#d62728";
constexpr const char* kBlue = "#1f77b4";
constexpr const char* kMagenta = "#e377c2";
constexpr const char* kCyan = "#17becf";
constexpr const char* kGrey = "#7f7f7f";

const std::vector<std::string> kNested{"Short-Nested", "Long-Nested"};
const std::vector<std::string> kSuccessive{"Short-Successive", "Long-Successive"};
const std::vector<std::string> kNesting{"Short-Successive", "Long-Successive", "Short-Nested",
                                        "Long-Nested"};

std::string num(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string signature(const eval::ConditionSummary& s) {
  std::string sig;
  for (const auto* f : {&s.task, &s.condition, &s.congruence, &s.role, &s.attractor})
    sig += *f == "*" ? '0' : '1';
  return sig;
}

std::optional<std::string> congruence_of(const eval::ConditionSummary& s) {
  if (s.congruence != "*") return s.congruence;
  if (s.condition != "*" && s.condition.size() >= 2)
    return s.condition[0] == s.condition[1] ? "congruent" : "incongruent";
  return std::nullopt;
}

std::optional<ErrorCell> pool(std::span<const eval::ConditionSummary> rows, const std::string& task,
                              const std::string& role, const std::string& congruence) {
  std::size_t n = 0, errors = 0;
  for (const auto& r : rows) {
    if (!r.defined || r.task != task || r.role != role) continue;
    const auto c = congruence_of(r);
    if (!c || (!congruence.empty() && *c != congruence)) continue;
    n += r.n;
    errors += static_cast<std::size_t>(std::llround(r.error_rate * static_cast<double>(r.n)));
  }
  if (n == 0) return std::nullopt;
  return wilson(errors, n);
}

struct Svg {
  std::ostringstream o;
  Svg(double w, double h, const std::string& hash) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w, 0) << "\" height=\""
      << num(h, 0) << "\" viewBox=\"0 0 " << num(w, 0) << ' ' << num(h, 0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n<!-- manifest " << hash << " -->\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1,
            bool dashed = false) {
    o << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\""
      << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width, 1) << '"'
      << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = {}) {
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\""
      << num(h) << "\" fill=\"" << fill << '"' << extra << "/>\n";
  }
  void text(double x, double y, std::string_view s, const std::string& attrs = {}) {
    o << "<text x=\"" << num(x) << "\" y=\"" << num(y) << '"' << attrs << '>' << xml(s) << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, bool dashed) {
    o << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\""
      << (dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    for (const auto& [x, y] : pts) o << num(x) << ',' << num(y) << ' ';
    o << "\"/>\n";
  }
  std::string done() {
    o << "</svg>\n";
    return o.str();
  }
};

bool singular_subject(const std::string& condition) {
  return !condition.empty() && (condition[0] == 'S' || condition[0] == 'M');
}

bool attractor_incongruent(const std::string& condition) {
  return condition.size() >= 2 && condition[0] != condition[1];
}

}  // namespace

ErrorCell wilson(std::size_t errors, std::size_t n) {
  ErrorCell c;
  c.n = n;
  c.errors = errors;
  if (n == 0) {
    c.rate = c.ci_low = c.ci_high = std::numeric_limits<double>::quiet_NaN();
    return c;
  }
  const double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(errors) / nn;
  const double denom = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2 * nn)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / denom;
  c.rate = p;
  c.ci_low = std::max(0.0, centre - half);
  c.ci_high = std::min(1.0, centre + half);
  return c;
}

ComparisonReport compare_model_human(std::span<const eval::ConditionSummary> model,
                                     std::span<const eval::ConditionSummary> human) {
  if (model.empty()) throw ArgumentError("compare: no model summaries");
  ComparisonReport r;
  r.human_present = !human.empty();
  const std::string sig = signature(model[0]);
  for (const auto& s : model)
    if (signature(s) != sig) throw AlignmentError("model summaries mix several groupings");
  std::map<std::string, const eval::ConditionSummary*> by_key;
  for (const auto& s : human) {
    if (signature(s) != sig)
      throw AlignmentError("human summaries are grouped differently from the model summaries");
    by_key[s.key()] = &s;
  }
  if (r.human_present) {
    std::set<std::string> model_keys;
    for (const auto& s : model) model_keys.insert(s.key());
    for (const auto& [key, s] : by_key)
      if (!model_keys.count(key)) throw AlignmentError("human group " + key + " has no model counterpart");
  }
  for (const auto& s : model) {
    r.model_rows.push_back(s);
    const auto it = by_key.find(s.key());
    if (r.human_present && it == by_key.end())
      throw AlignmentError("model group " + s.key() + " has no human counterpart");
    r.human_rows.push_back(it == by_key.end() ? std::nullopt : std::optional(*it->second));
  }

  bool roles = false;
  for (const auto& s : model) roles |= s.role != "*";
  const std::vector<std::string> role_list =
      roles ? std::vector<std::string>{"main", "embedded"} : std::vector<std::string>{"*"};
  for (const auto& task : kNesting)
    for (const auto& role : role_list)
      for (const std::string cong : {"congruent", "incongruent"}) {
        PanelRow p{task, role, cong, pool(model, task, role, cong), std::nullopt};
        if (r.human_present) p.human = pool(human, task, role, cong);
        if (p.model || p.human) r.panels.push_back(p);
      }

  using Side = std::span<const eval::ConditionSummary>;
  auto rate = [](Side rows, const std::vector<std::string>& tasks, const std::string& role,
                 const std::string& cong) -> std::optional<double> {
    std::size_t n = 0, e = 0;
    for (const auto& t : tasks)
      if (const auto c = pool(rows, t, role, cong)) {
        n += c->n;
        e += c->errors;
      }
    if (n == 0) return std::nullopt;
    return static_cast<double>(e) / static_cast<double>(n);
  };
  auto effect = [&](Side rows, const std::string& task, const std::string& role) -> std::optional<double> {
    const auto inc = rate(rows, {task}, role, "incongruent"), con = rate(rows, {task}, role, "congruent");
    if (!inc || !con) return std::nullopt;
    return *inc - *con;
  };
  using Check = std::function<std::optional<bool>(Side)>;
  const std::vector<std::pair<std::string, Check>> checks = {
      {"successive embedded error below nested embedded error",
       [&](Side s) -> std::optional<bool> {
         const auto a = rate(s, kSuccessive, "embedded", ""), b = rate(s, kNested, "embedded", "");
         if (!a || !b) return std::nullopt;
         return *a < *b;
       }},
      {"incongruent above congruent error on every nested verb",
       [&](Side s) -> std::optional<bool> {
         bool all = true;
         for (const auto& t : kNested)
           for (const std::string role : {"main", "embedded"}) {
             const auto e = effect(s, t, role);
             if (!e) return std::nullopt;
             all &= *e > 0;
           }
         return all;
       }},
      {"congruence effect larger on embedded than main verbs in both nested tasks",
       [&](Side s) -> std::optional<bool> {
         bool all = true;
         for (const auto& t : kNested) {
           const auto emb = effect(s, t, "embedded"), mn = effect(s, t, "main");
           if (!emb || !mn) return std::nullopt;
           all &= *emb > *mn;
         }
         return all;
       }},
      {"embedded congruence effect larger in Long-Nested than Short-Nested",
       [&](Side s) -> std::optional<bool> {
         const auto l = effect(s, "Long-Nested", "embedded"), sh = effect(s, "Short-Nested", "embedded");
         if (!l || !sh) return std::nullopt;
         return *l > *sh;
       }},
      {"below chance on Long-Nested embedded incongruent",
       [&](Side s) -> std::optional<bool> {
         const auto e = rate(s, {"Long-Nested"}, "embedded", "incongruent");
         if (!e) return std::nullopt;
         return *e > 0.5;
       }},
      {"above chance on Long-Nested embedded incongruent",
       [&](Side s) -> std::optional<bool> {
         const auto e = rate(s, {"Long-Nested"}, "embedded", "incongruent");
         if (!e) return std::nullopt;
         return *e < 0.5;
       }},
  };
  for (const auto& [name, fn] : checks) {
    CheckItem c{name, fn(model), std::nullopt, std::nullopt};
    if (r.human_present) c.human = fn(human);
    if (c.model && c.human) c.differs = *c.model != *c.human;
    r.checklist.push_back(c);
  }
  return r;
}

nlohmann::json to_json(const ComparisonReport& r) {
  auto cell = [](const std::optional<ErrorCell>& c) -> nlohmann::json {
    if (!c) return nullptr;
    return {{"n", c->n}, {"errors", c->errors}, {"error_rate", c->rate},
            {"ci_low", c->ci_low}, {"ci_high", c->ci_high}};
  };
  auto opt = [](const std::optional<bool>& b) -> nlohmann::json {
    if (!b) return nullptr;
    return *b;
  };
  nlohmann::json panels = nlohmann::json::array();
  for (const auto& p : r.panels)
    panels.push_back({{"task", p.task}, {"role", p.role}, {"congruence", p.congruence},
                      {"model", cell(p.model)}, {"human", cell(p.human)}});
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < r.model_rows.size(); ++k)
    rows.push_back({{"model", eval::to_json(r.model_rows[k])},
                    {"human", r.human_rows[k] ? eval::to_json(*r.human_rows[k]) : nlohmann::json(nullptr)}});
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checklist)
    checks.push_back({{"name", c.name}, {"model", opt(c.model)}, {"human", opt(c.human)},
                      {"differs", opt(c.differs)}});
  return {{"v", 1}, {"human_present", r.human_present}, {"panels", panels}, {"rows", rows},
          {"checklist", checks}};
}

std::string to_text(const ComparisonReport& r) {
  std::ostringstream o;
  auto cell = [](const std::optional<ErrorCell>& c) {
    if (!c) return std::string("absent");
    return num(c->rate, 3) + " [" + num(c->ci_low, 3) + ", " + num(c->ci_high, 3) + "] n=" +
           std::to_string(c->n);
  };
  auto yn = [](const std::optional<bool>& b) { return b ? (*b ? "yes" : "no") : "n/a"; };
  o << "Error rates (model | human)\n";
  for (const auto& p : r.panels)
    o << "  " << p.task << " " << p.role << " " << p.congruence << ": " << cell(p.model) << " | "
      << (r.human_present ? cell(p.human) : std::string("absent")) << '\n';
  o << "Checklist (model / human / differs)\n";
  for (const auto& c : r.checklist)
    o << "  " << c.name << ": " << yn(c.model) << " / " << yn(c.human) << " / " << yn(c.differs) << '\n';
  return o.str();
}

std::string svg_comparison(const ComparisonReport& r, const std::string& hash) {
  const double pw = 260, ph = 220, top = 30, left = 40;
  Svg svg(left + 4 * pw + 20, top + ph + 60, hash);
  svg.o << "<defs><pattern id=\"hatch\" width=\"4\" height=\"4\" patternUnits=\"userSpaceOnUse\">"
           "<path d=\"M0,4 L4,0\" stroke=\"black\" stroke-width=\"0.6\"/></pattern></defs>\n";
  auto y_of = [&](double v) { return top + ph * (1.0 - v); };
  for (std::size_t t = 0; t < kNesting.size(); ++t) {
    const double x0 = left + static_cast<double>(t) * pw;
    svg.text(x0 + pw / 2, top - 10, kNesting[t], " text-anchor=\"middle\"");
    svg.line(x0, top, x0, top + ph, "black");
    svg.line(x0, top + ph, x0 + pw - 20, top + ph, "black");
    svg.line(x0, y_of(0.5), x0 + pw - 20, y_of(0.5), kGrey, 1, true);
    if (t == 0)
      for (double v : {0.0, 0.5, 1.0}) svg.text(x0 - 5, y_of(v) + 4, num(v, 1), " text-anchor=\"end\"");
    std::size_t slot = 0;
    for (const std::string role : {"main", "embedded", "*"}) {
      bool any = false;
      for (const auto& p : r.panels) {
        if (p.task != kNesting[t] || p.role != role) continue;
        any = true;
        const bool inc = p.congruence == "incongruent";
        for (int side = 0; side < 2; ++side) {
          const auto& c = side == 0 ? p.model : p.human;
          const double bx = x0 + 10 + static_cast<double>(slot) * 110 + (inc ? 50 : 0) + side * 22;
          if (!c) continue;
          const std::string colour = side == 0 ? (inc ? kRed : kBlue) : (inc ? kMagenta : kCyan);
          svg.rect(bx, y_of(c->rate), 20, ph * c->rate, colour);
          if (side == 1) svg.rect(bx, y_of(c->rate), 20, ph * c->rate, "url(#hatch)");
          svg.line(bx + 10, y_of(c->ci_low), bx + 10, y_of(c->ci_high), "black");
        }
      }
      if (any) {
        svg.text(x0 + 10 + static_cast<double>(slot) * 110 + 45, top + ph + 15, role == "*" ? "all" : role,
                 " text-anchor=\"middle\"");
        ++slot;
      }
    }
  }
  svg.text(left, top + ph + 40,
           "model: blue congruent, red incongruent; human (hatched): cyan congruent, magenta incongruent");
  if (!r.human_present) svg.text(left, top + ph + 55, "human data absent");
  return svg.done();
}

std::string svg_topk(std::span<const ablation::TopKRow> rows, const std::string& hash) {
  const double w = 480, h = 300, left = 50, top = 20, pw = 400, ph = 230;
  Svg svg(w, h, hash);
  std::size_t k_max = 0;
  std::vector<std::string> conds;
  for (const auto& r : rows) {
    k_max = std::max(k_max, r.k);
    if (std::find(conds.begin(), conds.end(), r.condition) == conds.end()) conds.push_back(r.condition);
  }
  auto x_of = [&](double k) { return left + (k_max ? pw * k / static_cast<double>(k_max) : 0.0); };
  auto y_of = [&](double v) { return top + ph * (1.0 - v); };
  svg.line(left, top, left, top + ph, "black");
  svg.line(left, top + ph, left + pw, top + ph, "black");
  svg.line(left, y_of(0.5), left + pw, y_of(0.5), kGrey, 1, true);
  for (double v : {0.0, 0.5, 1.0}) svg.text(left - 5, y_of(v) + 4, num(v, 1), " text-anchor=\"end\"");
  for (std::size_t k = 0; k <= k_max; ++k)
    svg.text(x_of(static_cast<double>(k)), top + ph + 15, std::to_string(k), " text-anchor=\"middle\"");
  svg.text(left + pw / 2, h - 5, "k (ablated units)", " text-anchor=\"middle\"");
  for (std::size_t c = 0; c < conds.size(); ++c) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows)
      if (r.condition == conds[c]) pts.push_back({x_of(static_cast<double>(r.k)), y_of(r.accuracy)});
    const std::string colour = singular_subject(conds[c]) ? kRed : kBlue;
    svg.polyline(pts, colour, attractor_incongruent(conds[c]));
    svg.text(left + pw + 5, top + 14 * static_cast<double>(c + 1), conds[c], " fill=\"" + colour + "\"");
  }
  return svg.done();
}

std::string svg_traces(std::span<const probing::TraceSummary> traces, const std::string& hash) {
  std::vector<std::pair<lm::UnitId, probing::Signal>> panels;
  for (const auto& t : traces)
    if (std::find(panels.begin(), panels.end(), std::make_pair(t.unit, t.signal)) == panels.end())
      panels.push_back({t.unit, t.signal});
  const double pw = 420, ph = 140, left = 50, gap = 60;
  Svg svg(left + pw + 80, gap + static_cast<double>(panels.size()) * (ph + gap), hash);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double top = gap / 2 + static_cast<double>(p) * (ph + gap);
    double lo = 0.0, hi = 0.0;
    std::size_t len = 0;
    const probing::TraceSummary* first = nullptr;
    for (const auto& t : traces)
      if (t.unit == panels[p].first && t.signal == panels[p].second) {
        if (!first) first = &t;
        len = std::max(len, t.mean.size());
        for (double v : t.mean) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    if (hi - lo < 1e-9) hi = lo + 1.0;
    auto x_of = [&](double t) { return left + (len > 1 ? pw * t / static_cast<double>(len - 1) : 0.0); };
    auto y_of = [&](double v) { return top + ph * (hi - v) / (hi - lo); };
    svg.text(left, top - 8,
             std::to_string(panels[p].first.layer) + ":" + std::to_string(panels[p].first.index) + " " +
                 std::string(probing::signal_name(panels[p].second)));
    svg.line(left, top, left, top + ph, "black");
    svg.line(left, y_of(0.0), left + pw, y_of(0.0), kGrey, 0.5);
    svg.text(left - 5, top + 4, num(hi), " text-anchor=\"end\"");
    svg.text(left - 5, top + ph + 4, num(lo), " text-anchor=\"end\"");
    for (std::size_t t = 0; t < first->tokens.size(); ++t)
      svg.text(x_of(static_cast<double>(t)), top + ph + 14, first->tokens[t], " text-anchor=\"middle\"");
    std::size_t legend = 0;
    for (const auto& t : traces) {
      if (!(t.unit == panels[p].first && t.signal == panels[p].second)) continue;
      std::vector<std::pair<double, double>> pts;
      for (std::size_t k = 0; k < t.mean.size(); ++k) pts.push_back({x_of(static_cast<double>(k)), y_of(t.mean[k])});
      const std::string colour = singular_subject(t.condition) ? kRed : kBlue;
      svg.polyline(pts, colour, attractor_incongruent(t.condition));
      svg.text(left + pw + 5, top + 12 * static_cast<double>(++legend), t.condition, " fill=\"" + colour + "\"");
    }
  }
  return svg.done();
}

std::string svg_pca(const probing::EmbeddingProjection& p, const std::string& hash) {
  const double w = 520, h = 440, left = 40, top = 20, pw = 440, ph = 380;
  Svg svg(w, h, hash);
  auto [xl, xh] = std::minmax_element(p.x.begin(), p.x.end());
  auto [yl, yh] = std::minmax_element(p.y.begin(), p.y.end());
  const double x0 = *xl, x1 = *xh > *xl ? *xh : *xl + 1, y0 = *yl, y1 = *yh > *yl ? *yh : *yl + 1;
  auto x_of = [&](double v) { return left + pw * (v - x0) / (x1 - x0); };
  auto y_of = [&](double v) { return top + ph * (y1 - v) / (y1 - y0); };
  svg.line(left, top + ph, left + pw, top + ph, "black");
  svg.line(left, top, left, top + ph, "black");
  svg.text(left + pw / 2, h - 5, "PC" + std::to_string(p.pc_x), " text-anchor=\"middle\"");
  svg.text(12, top + ph / 2, "PC" + std::to_string(p.pc_y));
  for (std::size_t k = 0; k < p.words.size(); ++k) {
    const auto& f = p.features[k];
    const std::string colour = f.number == 'S' ? kRed : f.number == 'P' ? kBlue : kGrey;
    std::string attrs = " fill=\"" + colour + "\"";
    if (f.gender == 'F') attrs += " font-weight=\"bold\"";
    if (f.gender == 'M') attrs += " font-style=\"italic\"";
    svg.o << "<circle cx=\"" << num(x_of(p.x[k])) << "\" cy=\"" << num(y_of(p.y[k]))
          << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
    svg.text(x_of(p.x[k]) + 4, y_of(p.y[k]) - 3, p.words[k], attrs);
  }
  return svg.done();
}

}  // namespace aglb::report
