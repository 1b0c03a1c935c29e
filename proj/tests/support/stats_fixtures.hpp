#pragma once

// Statistics fixtures with independently derived expected values.

#include <cmath>
#include <utility>
#include <vector>

#include "aglb/stats.hpp"

namespace aglb::test_support {

// Welch fixtures with t and df worked out by hand in exact fractions:
//   {1,2,3} vs {4,5,6}: t = -3/sqrt(2/3), df = 4
//   {10,12,9,11,14,13} vs {7,8,6,9}: t = 4, df = 135/17
//   {2.1,3.4,1.9,5.6,4.0} vs {3.3,2.2,4.8}: df = 340254916/69140969
// Two-sided p from published Student t tables (scipy 1.x as reference).
struct WelchFixture {
  std::vector<double> a, b;
  double t, df, p;
};

inline const WelchFixture kWelch[] = {
    {{1, 2, 3}, {4, 5, 6}, -3.0 / std::sqrt(2.0 / 3.0), 4.0, 0.021311641128756727},
    {{10, 12, 9, 11, 14, 13}, {7, 8, 6, 9}, 4.0, 135.0 / 17.0, 0.004009641482501039},
    {{2.1, 3.4, 1.9, 5.6, 4.0},
     {3.3, 2.2, 4.8},
     -0.03292788950072114,
     340254916.0 / 69140969.0,
     0.9750257704989872},
};

// 50 points, y drawn by a fixed low-discrepancy sequence against a logistic curve.
inline stats::DesignMatrix fifty(std::vector<int>& y) {
  stats::DesignMatrix d{{"(intercept)", "x"}, numerics::Matrix(50, 2)};
  y.assign(50, 0);
  for (int i = 0; i < 50; ++i) {
    const double x = -2.0 + 4.0 * i / 49.0;
    d.x(i, 0) = 1.0;
    d.x(i, 1) = x;
    const double u = std::fmod(0.5 + i * 0.6180339887498949, 1.0);
    y[i] = u < 1.0 / (1.0 + std::exp(-(0.4 + 1.1 * x))) ? 1 : 0;
  }
  return d;
}

inline double ll_oracle(const stats::DesignMatrix& d, const std::vector<int>& y, double b0, double b1) {
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * d.x(i, 1))));
    ll += y[i] ? std::log(p) : std::log(1.0 - p);
  }
  return ll;
}

// Maximum-likelihood (b0, b1) by a zooming grid search; the likelihood is concave.
inline std::pair<double, double> grid_search_oracle(const stats::DesignMatrix& d,
                                                    const std::vector<int>& y) {
  double c0 = 0.0, c1 = 0.0, step = 0.5;
  for (int level = 0; level < 9; ++level, step /= 4.0) {
    const double s0 = c0, s1 = c1;
    double best = -1e300;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double ll = ll_oracle(d, y, s0 + i * step, s1 + j * step);
        if (ll > best) {
          best = ll;
          c0 = s0 + i * step;
          c1 = s1 + j * step;
        }
      }
  }
  return {c0, c1};
}

}  // namespace aglb::test_support
