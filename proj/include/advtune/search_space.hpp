#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include "advtune/errors.hpp"

namespace advtune {

// Discretized (ratio, epsilon) search space: ratio_points evenly spaced
// values over [0, 1] and eps_points evenly spaced values over
// [eps_min, eps_max].
struct SearchSpace {
  std::size_t ratio_points = 30;
  std::size_t eps_points = 30;
  double eps_min = 0.01;
  double eps_max = 0.5;

  void validate() const {
    if (ratio_points < 2 || eps_points < 2)
      throw SpecError("search space axes need at least two points");
    if (!(eps_min >= 0.0) || !(eps_max > eps_min) || !std::isfinite(eps_max))
      throw SpecError("search space needs 0 <= eps_min < eps_max");
  }

  std::size_t size() const { return ratio_points * eps_points; }

  double ratio_value(std::size_t i) const {
    return static_cast<double>(i) / static_cast<double>(ratio_points - 1);
  }
  double eps_value(std::size_t j) const {
    return eps_min + (eps_max - eps_min) * static_cast<double>(j) /
                         static_cast<double>(eps_points - 1);
  }
};

struct GridPoint {
  std::size_t ratio_index = 0;
  std::size_t eps_index = 0;

  std::size_t flat(const SearchSpace& s) const { return ratio_index * s.eps_points + eps_index; }
  static GridPoint from_flat(const SearchSpace& s, std::size_t flat) {
    return {flat / s.eps_points, flat % s.eps_points};
  }
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

}  // namespace advtune
