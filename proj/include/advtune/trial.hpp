#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "advtune/search_space.hpp"

namespace advtune {

// One explored configuration and what it measured.
struct Trial {
  GridPoint point;
  double ratio = 0.0;
  double epsilon = 0.0;
  double acc_test = 0.0;
  double acc_adv = 0.0;
  std::uint64_t seed = 0;
  double duration_seconds = 0.0;
  std::size_t iteration = 0;
  bool failed = false;
  std::string error;
};

}  // namespace advtune
