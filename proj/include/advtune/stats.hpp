#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace advtune::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

namespace detail {
// Sum of squared deviations, computed on values shifted by the first element
// so that identical inputs give exactly zero.
inline double squared_deviations(std::span<const double> xs) {
  const double x0 = xs.front();
  double m = 0.0;
  for (double x : xs) m += x - x0;
  m /= static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - x0 - m) * (x - x0 - m);
  return s;
}
}  // namespace detail

// Population standard deviation (divides by n); 0 for fewer than two values.
inline double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(detail::squared_deviations(xs) / static_cast<double>(xs.size()));
}

// Sample standard deviation (divides by n - 1).
inline double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(detail::squared_deviations(xs) / static_cast<double>(xs.size() - 1));
}

// 1-based ranks; tied values share their average rank.
inline std::vector<double> ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation (Pearson on average ranks); 0 when either
// series is constant.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = ranks(xs), ry = ranks(ys);
  return pearson(rx, ry);
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Normal-approximation 95% interval for the mean.
inline Interval ci95(std::span<const double> xs) {
  const double m = mean(xs);
  if (xs.size() < 2) return {m, m};
  const double half = 1.959963984540054 * sample_stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
  return {m - half, m + half};
}

}  // namespace advtune::stats
