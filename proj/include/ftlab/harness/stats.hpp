#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ftlab/error.hpp"

namespace ftlab::harness {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw invalid_argument("mean: empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for a single value.
inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw invalid_argument("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// R^2 of the least-squares line y ~ a + b x, i.e. 1 - SS_res / SS_tot.
// A constant predictor explains nothing and gets 0.
inline double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw dimension_mismatch("r_squared: sizes differ");
  if (x.size() < 2) throw invalid_argument("r_squared: need at least two points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  const double b = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fit = my + b * (x[i] - mx);
    ss_res += (y[i] - fit) * (y[i] - fit);
  }
  return 1.0 - ss_res / syy;
}

}  // namespace ftlab::harness
