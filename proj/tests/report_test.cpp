#include "aglb/report.hpp"

#include <gtest/gtest.h>

#include "aglb/errors.hpp"

using namespace aglb;
using report::compare_model_human;

namespace {

// Full task x condition x role grid for the four nesting tasks. `rate`
// picks the error rate of each cell.
template <class F>
std::vector<eval::ConditionSummary> grid(F rate, std::size_t n = 100) {
  std::vector<eval::ConditionSummary> out;
  for (std::string task : {"Short-Successive", "Long-Successive", "Short-Nested", "Long-Nested"})
    for (std::string cond : {"SS", "SP", "PS", "PP"})
      for (std::string role : {"main", "embedded"}) {
        eval::ConditionSummary s;
        s.task = task;
        s.condition = cond;
        s.role = role;
        s.n = n;
        s.defined = true;
        s.error_rate = rate(task, cond, role);
        s.accuracy = 1.0 - s.error_rate;
        out.push_back(s);
      }
  return out;
}

// Human-like pattern: nested embedded incongruent hardest, long worse than short.
double human_like(const std::string& task, const std::string& cond, const std::string& role) {
  const bool inc = cond[0] != cond[1];
  const bool nested = task.ends_with("Nested");
  if (!inc) return 0.05;
  if (!nested) return role == "embedded" ? 0.06 : 0.08;
  if (role == "main") return 0.10;
  return task.starts_with("Long") ? 0.40 : 0.25;
}

const report::CheckItem& item(const report::ComparisonReport& r, std::string_view prefix) {
  for (const auto& c : r.checklist)
    if (c.name.starts_with(prefix)) return c;
  throw std::runtime_error("no check " + std::string(prefix));
}

}  // namespace

TEST(Wilson, KnownIntervals) {
  // 10/100: textbook Wilson score interval [0.0552, 0.1744].
  const auto c = report::wilson(10, 100);
  EXPECT_NEAR(c.rate, 0.1, 1e-15);
  EXPECT_NEAR(c.ci_low, 0.05523, 5e-5);
  EXPECT_NEAR(c.ci_high, 0.17437, 5e-5);
  // 0/20: lower bound 0, upper z^2/(n+z^2).
  const double z2 = 1.959963984540054 * 1.959963984540054;
  const auto zero = report::wilson(0, 20);
  EXPECT_DOUBLE_EQ(zero.ci_low, 0.0);
  EXPECT_NEAR(zero.ci_high, z2 / (20 + z2), 1e-12);
  // Mirror symmetry.
  for (std::size_t e = 0; e <= 37; ++e) {
    const auto a = report::wilson(e, 37), b = report::wilson(37 - e, 37);
    EXPECT_NEAR(a.ci_low, 1.0 - b.ci_high, 1e-12);
  }
  EXPECT_TRUE(std::isnan(report::wilson(0, 0).rate));
}

TEST(Compare, IdenticalSidesNeverDiffer) {
  const auto m = grid(human_like);
  const auto r = compare_model_human(m, m);
  EXPECT_TRUE(r.human_present);
  ASSERT_EQ(r.checklist.size(), 6u);
  for (const auto& c : r.checklist) {
    ASSERT_TRUE(c.model && c.human && c.differs) << c.name;
    EXPECT_EQ(*c.model, *c.human);
    EXPECT_FALSE(*c.differs) << c.name;
  }
  EXPECT_EQ(r.panels.size(), 16u);
  EXPECT_EQ(r.model_rows.size(), r.human_rows.size());
}

TEST(Compare, ChecklistOnHandPattern) {
  const auto r = compare_model_human(grid(human_like), {});
  EXPECT_FALSE(r.human_present);
  EXPECT_TRUE(*item(r, "successive embedded").model);
  EXPECT_TRUE(*item(r, "incongruent above").model);
  EXPECT_TRUE(*item(r, "congruence effect larger on embedded").model);
  EXPECT_TRUE(*item(r, "embedded congruence effect larger in Long").model);
  EXPECT_FALSE(*item(r, "below chance").model);
  EXPECT_TRUE(*item(r, "above chance").model);
  for (const auto& c : r.checklist) {
    EXPECT_FALSE(c.human);
    EXPECT_FALSE(c.differs);
  }
  for (const auto& p : r.panels) EXPECT_FALSE(p.human);

  // Pooled cell: Long-Nested embedded incongruent = SP + PS, 40 errors each.
  for (const auto& p : r.panels)
    if (p.task == "Long-Nested" && p.role == "embedded" && p.congruence == "incongruent") {
      EXPECT_EQ(p.model->n, 200u);
      EXPECT_EQ(p.model->errors, 80u);
    }
  EXPECT_NE(report::to_text(r).find("absent"), std::string::npos);
}

TEST(Compare, OppositePatternDiffers) {
  auto flipped = grid([](const std::string& t, const std::string& c, const std::string& role) {
    const bool inc = c[0] != c[1];
    if (t == "Long-Nested" && role == "embedded" && inc) return 0.7;
    return inc ? 0.02 : 0.05;
  });
  const auto r = compare_model_human(flipped, grid(human_like));
  EXPECT_TRUE(*item(r, "below chance").model);
  EXPECT_FALSE(*item(r, "below chance").human);
  EXPECT_TRUE(*item(r, "below chance").differs);
  EXPECT_TRUE(*item(r, "incongruent above").differs);
  const auto j = report::to_json(r);
  EXPECT_EQ(j["checklist"].size(), 6u);
  EXPECT_EQ(j["rows"].size(), 32u);
}

TEST(Compare, AlignmentErrors) {
  const auto m = grid(human_like);
  auto missing = m;
  missing.pop_back();
  EXPECT_THROW(compare_model_human(m, missing), AlignmentError);
  EXPECT_THROW(compare_model_human(missing, m), AlignmentError);
  auto regrouped = m;
  for (auto& s : regrouped) s.role = "*";
  EXPECT_THROW(compare_model_human(m, regrouped), AlignmentError);
  EXPECT_THROW(compare_model_human({}, m), ArgumentError);
}

TEST(Compare, UndefinedCellsStayOutOfPools) {
  auto m = grid(human_like);
  for (auto& s : m)
    if (s.task == "Long-Nested") {
      s.n = 0;
      s.defined = false;
      s.error_rate = std::numeric_limits<double>::quiet_NaN();
    }
  const auto r = compare_model_human(m, {});
  EXPECT_FALSE(item(r, "below chance").model);
  EXPECT_FALSE(item(r, "embedded congruence effect larger in Long").model);
  EXPECT_TRUE(item(r, "successive embedded").model);
}

TEST(Svg, CarryManifestAndStyle) {
  const auto r = compare_model_human(grid(human_like), grid(human_like));
  const auto cmp = report::svg_comparison(r, "abc123");
  EXPECT_TRUE(cmp.starts_with("<svg"));
  EXPECT_NE(cmp.find("<!-- manifest abc123 -->"), std::string::npos);
  EXPECT_NE(cmp.find("url(#hatch)"), std::string::npos);
  EXPECT_TRUE(cmp.ends_with("</svg>\n"));

  std::vector<ablation::TopKRow> rows;
  for (std::size_t k = 0; k <= 3; ++k)
    for (std::string c : {"SS", "SP", "PS", "PP"}) {
      ablation::TopKRow row;
      row.k = k;
      row.condition = c;
      row.accuracy = 1.0 - 0.1 * static_cast<double>(k);
      rows.push_back(row);
    }
  const auto topk = report::svg_topk(rows, "h");
  std::size_t dashed = 0;
  for (std::size_t pos = 0; (pos = topk.find("<polyline", pos)) != std::string::npos; ++pos)
    dashed += topk.substr(pos, topk.find('>', pos) - pos).find("dasharray") != std::string::npos;
  EXPECT_EQ(dashed, 2u);  // SP and PS

  probing::EmbeddingProjection p;
  p.words = {"il", "la", "i & le"};
  p.features = {{'S', 'M'}, {'S', 'F'}, {'P', '?'}};
  p.x = {0.0, 1.0, 2.0};
  p.y = {1.0, 0.0, -1.0};
  const auto pca = report::svg_pca(p, "h");
  EXPECT_NE(pca.find("font-style=\"italic\">il<"), std::string::npos);
  EXPECT_NE(pca.find("font-weight=\"bold\">la<"), std::string::npos);
  EXPECT_NE(pca.find("i &amp; le"), std::string::npos);
}
