#pragma once

// Synthetic two-mode response surface over the (ratio, epsilon) grid, used to
// exercise the tuner without training anything. Robustness has a broad main
// peak and a narrower decoy peak; clean accuracy falls off with both knobs.

#include <cmath>
#include <cstdint>

#include "advtune/hpo.hpp"

namespace advtune::testing {

inline SearchSpace surrogate_space() { return {30, 30, 0.01, 0.5}; }

inline constexpr double kSurrogateBaseline = 0.99;

inline Measurement surrogate_measure(double ratio, double epsilon) {
  const SearchSpace s = surrogate_space();
  const double e = (epsilon - s.eps_min) / (s.eps_max - s.eps_min);
  auto bump = [](double dr, double de, double wr, double we) {
    return std::exp(-(dr * dr / wr + de * de / we));
  };
  const double adv = 0.15 + 0.75 * bump(ratio - 0.7, e - 0.55, 0.5, 0.35) +
                     0.45 * bump(ratio - 0.05, e - 0.05, 0.01, 0.01);
  const double test = kSurrogateBaseline - 0.05 * ratio * e - 0.03 * e * e - 0.01 * ratio;
  return {test, adv, 0.0};
}

inline Objective surrogate_objective() {
  return [](double ratio, double epsilon, std::uint64_t) { return surrogate_measure(ratio, epsilon); };
}

// Exhaustive maximum of acc_adv over the grid.
inline double surrogate_optimum() {
  const SearchSpace s = surrogate_space();
  double best = 0.0;
  for (std::size_t i = 0; i < s.ratio_points; ++i)
    for (std::size_t j = 0; j < s.eps_points; ++j)
      best = std::max(best, surrogate_measure(s.ratio_value(i), s.eps_value(j)).acc_adv);
  return best;
}

}  // namespace advtune::testing
