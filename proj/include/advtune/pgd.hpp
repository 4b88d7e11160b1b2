#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advtune/dataset.hpp"
#include "advtune/errors.hpp"
#include "advtune/network.hpp"
#include "advtune/rng.hpp"

namespace advtune {

// l-infinity PGD adversary.
struct AttackConfig {
  double epsilon = 0.3;
  double step_size = 0.01;
  std::size_t max_iterations = 40;
  bool random_start = true;
  double clip_min = 0.0;
  double clip_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
      throw SpecError("attack epsilon must be finite and >= 0");
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw SpecError("attack step size must be finite and > 0");
    if (max_iterations < 1) throw SpecError("attack needs at least one iteration");
    if (!(clip_min < clip_max)) throw SpecError("attack clip_min must be below clip_max");
  }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

namespace detail {

inline double sign_of(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// Projection onto the epsilon-ball around the origin point, then onto the
// valid input range. Both are elementwise clamps.
inline double project(double x, double origin, double eps, double lo, double hi) {
  return std::clamp(std::clamp(x, origin - eps, origin + eps), lo, hi);
}

}  // namespace detail

// Iterates x <- P(x + step * sign(grad_x L(theta; x, y))) for a fixed number
// of steps, starting from x0 or (with random_start) from x0 plus seeded
// uniform noise in [-eps, eps]. The result stays within eps of x0 in l-inf and
// inside [clip_min, clip_max].
inline Tensor pgd_perturb(const Params& params, const NetworkSpec& spec, const Tensor& batch,
                          std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  for (double v : batch.values())
    if (!(v >= cfg.clip_min && v <= cfg.clip_max))
      throw InputError("batch value outside the attack clip range");
  if (cfg.epsilon == 0.0) return batch;

  const std::span<const double> origin = batch.values();
  Tensor x = batch;
  if (cfg.random_start) {
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> noise(-cfg.epsilon, cfg.epsilon);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = detail::project(origin[i] + noise(rng), origin[i], cfg.epsilon, cfg.clip_min,
                             cfg.clip_max);
  }

  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const GradientBundle g =
        compute_gradients(params, spec, x, labels, {.params = false, .inputs = true});
    const std::span<const double> grad = g.input_grads.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(grad[i]))
        throw NumericError("non-finite input gradient at PGD iteration " + std::to_string(it));
      x[i] = detail::project(x[i] + cfg.step_size * detail::sign_of(grad[i]), origin[i],
                             cfg.epsilon, cfg.clip_min, cfg.clip_max);
    }
  }
  return x;
}

// Replaces every example with its PGD counterpart, processing the set in
// chunks. Chunk c uses random-start seed derive_seed(cfg.seed, {c}); the
// sign of the per-example gradient does not depend on chunking.
inline LabeledSet attack_accuracy_inputs(const LabeledSet& data, const Params& params,
                                         const NetworkSpec& spec, const AttackConfig& cfg,
                                         std::size_t chunk = 256) {
  cfg.validate();
  if (cfg.epsilon == 0.0) return data;
  LabeledSet out = data;
  const std::size_t n = data.size();
  std::vector<std::size_t> rows;
  for (std::size_t start = 0, c = 0; start < n; start += chunk, ++c) {
    const std::size_t end = std::min(n, start + chunk);
    rows.resize(end - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const Tensor xb = data.features.gather_rows(rows);
    AttackConfig chunk_cfg = cfg;
    chunk_cfg.seed = derive_seed(cfg.seed, {c});
    const Tensor adv = pgd_perturb(
        params, spec, xb, std::span<const int>(data.labels).subspan(start, end - start),
        chunk_cfg);
    std::copy(adv.values().begin(), adv.values().end(),
              out.features.values().begin() +
                  static_cast<std::ptrdiff_t>(start * data.features.row_size()));
  }
  return out;
}

}  // namespace advtune
