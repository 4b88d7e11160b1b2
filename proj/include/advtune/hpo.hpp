#pragma once

// Budget-constrained search over (ratio, epsilon): grid, random and TPE
// strategies, the beta feasibility filter, and a repetition harness that
// reports success rates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advtune/errors.hpp"
#include "advtune/experiment.hpp"
#include "advtune/parallel.hpp"
#include "advtune/rng.hpp"
#include "advtune/search_space.hpp"
#include "advtune/stats.hpp"
#include "advtune/tpe.hpp"
#include "advtune/trial.hpp"

namespace advtune {

// ---------------------------------------------------------------------------
// Budget filter

// Allowed clean-accuracy drop. beta is in percentage points (1.6 means 1.6%),
// accuracies are fractions; nullopt is the unbounded budget.
struct Budget {
  std::optional<double> beta_points;
  double baseline_acc = 0.0;

  static Budget unbounded(double baseline = 0.0) { return {std::nullopt, baseline}; }
  static Budget points(double beta, double baseline) { return {beta, baseline}; }

  bool bounded() const { return beta_points.has_value(); }
  double threshold() const {
    return bounded() ? baseline_acc - *beta_points / 100.0
                     : -std::numeric_limits<double>::infinity();
  }
  void validate() const {
    if (bounded() && !(*beta_points >= 0.0)) throw SpecError("beta must be >= 0");
  }
};

struct FilterResult {
  std::vector<std::size_t> feasible;  // indices into the trial list, ascending
  std::optional<std::size_t> best;

  bool infeasible() const { return !best.has_value(); }
};

// Strict ordering for "best": higher acc_adv, then higher acc_test, then lower
// epsilon, then lower ratio.
inline bool better_trial(const Trial& a, const Trial& b) {
  if (a.acc_adv != b.acc_adv) return a.acc_adv > b.acc_adv;
  if (a.acc_test != b.acc_test) return a.acc_test > b.acc_test;
  if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
  return a.ratio < b.ratio;
}

inline bool is_feasible(const Trial& t, const Budget& budget) {
  return !t.failed && (!budget.bounded() || t.acc_test > budget.threshold());
}

// Feasible iff acc_test > baseline - beta (strict). Among trials that compare
// equal under better_trial, the earliest wins.
inline FilterResult budget_filter(std::span<const Trial> trials, const Budget& budget) {
  budget.validate();
  FilterResult r;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!is_feasible(trials[i], budget)) continue;
    r.feasible.push_back(i);
    if (!r.best || better_trial(trials[i], trials[*r.best])) r.best = i;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Strategies and schedules

enum class Strategy { grid, random, tpe };

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::grid: return "grid";
    case Strategy::random: return "random";
    case Strategy::tpe: return "tpe";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  if (name == "grid") return Strategy::grid;
  if (name == "random") return Strategy::random;
  if (name == "tpe") return Strategy::tpe;
  throw SpecError("unknown strategy '" + std::string(name) + "' (grid, random, tpe)");
}

namespace detail {

inline void check_iterations(const SearchSpace& space, std::size_t n) {
  if (n < 1 || n > space.size())
    throw SpecError("iteration count " + std::to_string(n) + " outside [1, " +
                    std::to_string(space.size()) + "]");
}

// `count` indices spread evenly over 0..axis-1, endpoints included; a single
// index sits at round((axis-1)/2). std::lround rounds halves away from zero.
inline std::vector<std::size_t> axis_indices(std::size_t axis, std::size_t count) {
  std::vector<std::size_t> idx;
  if (count == 1) {
    idx.push_back(static_cast<std::size_t>(std::lround(static_cast<double>(axis - 1) / 2.0)));
    return idx;
  }
  for (std::size_t k = 0; k < count; ++k)
    idx.push_back(static_cast<std::size_t>(std::lround(
        static_cast<double>(k) * static_cast<double>(axis - 1) / static_cast<double>(count - 1))));
  return idx;
}

}  // namespace detail

// r = floor(sqrt(n)) ratio rows by c = ceil(n / r) epsilon columns, product
// emitted row-major and truncated to n. When c exceeds the epsilon axis the
// columns are capped at the axis and rows grow to ceil(n / c) instead.
inline std::vector<GridPoint> grid_schedule(const SearchSpace& space, std::size_t n) {
  space.validate();
  detail::check_iterations(space, n);
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  std::size_t c = (n + r - 1) / r;
  if (c > space.eps_points) {
    c = space.eps_points;
    r = (n + c - 1) / c;
  }
  if (r > space.ratio_points) {
    r = space.ratio_points;
    c = (n + r - 1) / r;
  }
  const auto rows = detail::axis_indices(space.ratio_points, r);
  const auto cols = detail::axis_indices(space.eps_points, c);
  std::vector<GridPoint> out;
  out.reserve(n);
  for (std::size_t i : rows)
    for (std::size_t j : cols)
      if (out.size() < n) out.push_back({i, j});
  return out;
}

// n distinct grid points drawn uniformly without replacement.
inline std::vector<GridPoint> random_schedule(const SearchSpace& space, std::size_t n,
                                              std::uint64_t seed) {
  space.validate();
  detail::check_iterations(space, n);
  std::vector<std::size_t> flat(space.size());
  std::iota(flat.begin(), flat.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, flat.size() - 1);
    std::swap(flat[i], flat[pick(rng)]);
  }
  std::vector<GridPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(GridPoint::from_flat(space, flat[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Trials

// Measures one configuration. Real runs train and evaluate; tests plug in
// synthetic surfaces.
using Objective = std::function<Measurement(double ratio, double epsilon, std::uint64_t seed)>;

inline std::uint64_t trial_seed(std::uint64_t run_seed, const SearchSpace& space,
                                const GridPoint& p) {
  return derive_seed(run_seed, {stream::kTrial, p.flat(space)});
}

// Never throws for library errors: a failed measurement becomes a failed trial.
inline Trial evaluate_trial(const SearchSpace& space, const GridPoint& point,
                            const Objective& objective, std::uint64_t seed,
                            std::size_t iteration) {
  if (point.ratio_index >= space.ratio_points || point.eps_index >= space.eps_points)
    throw SpecError("grid point outside the search space");
  Trial t;
  t.point = point;
  t.ratio = space.ratio_value(point.ratio_index);
  t.epsilon = space.eps_value(point.eps_index);
  t.seed = seed;
  t.iteration = iteration;
  try {
    const Measurement m = objective(t.ratio, t.epsilon, seed);
    t.acc_test = m.acc_test;
    t.acc_adv = m.acc_adv;
    t.duration_seconds = m.duration_seconds;
  } catch (const Error& e) {
    t.failed = true;
    t.error = e.what();
  }
  return t;
}

// Objective that adversarially trains on `train` and measures on `validation`.
inline Objective training_objective(const LabeledSet& train, const LabeledSet& validation,
                                    const NetworkSpec& spec, const AdvTrainConfig& base,
                                    const AttackConfig& eval_attack) {
  return [&train, &validation, spec, base, eval_attack](double ratio, double eps,
                                                          std::uint64_t seed) {
    return train_and_measure(train, validation, spec, base, ratio, eps, eval_attack, seed);
  };
}

// Clean accuracy Acc_f of a clean-trained model on the budget split.
inline double measure_baseline(const LabeledSet& train, const LabeledSet& budget_split,
                               const NetworkSpec& spec, const AdvTrainConfig& base,
                               std::uint64_t seed) {
  AdvTrainConfig cfg = base.with(0.0, base.attack.epsilon);
  cfg.seed = seed;
  const TrainReport report = train_clean(train, cfg, spec);
  return clean_accuracy(report.params, spec, budget_split);
}

// ---------------------------------------------------------------------------
// One strategy run

struct TunerOutcome {
  Strategy strategy = Strategy::grid;
  std::uint64_t seed = 0;
  std::vector<Trial> trials;
  FilterResult filter;
  std::size_t iterations = 0;  // trials actually evaluated
  std::string error;           // set when the run itself aborted

  const Trial* best() const { return filter.best ? &trials[*filter.best] : nullptr; }
  bool infeasible() const { return filter.infeasible(); }
};

// Runs `n` iterations of a strategy. Grid and random trials are independent and
// may use `workers` threads; TPE evaluates strictly in sequence and stops early
// when the grid is exhausted.
inline TunerOutcome run_strategy(Strategy strategy, const SearchSpace& space, std::size_t n,
                                 const Objective& objective, const Budget& budget,
                                 std::uint64_t seed, const TpeParams& tpe = {},
                                 std::size_t workers = 1) {
  space.validate();
  budget.validate();
  detail::check_iterations(space, n);
  TunerOutcome out{strategy, seed, {}, {}, 0, {}};

  if (strategy == Strategy::tpe) {
    Rng rng(derive_seed(seed, {stream::kSchedule}));
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = tpe_propose(space, out.trials, tpe, rng);
      if (!p) break;
      out.trials.push_back(evaluate_trial(space, *p, objective, trial_seed(seed, space, *p), i));
    }
  } else {
    const auto schedule = strategy == Strategy::grid
                              ? grid_schedule(space, n)
                              : random_schedule(space, n, derive_seed(seed, {stream::kSchedule}));
    out.trials.resize(schedule.size());
    parallel_for(schedule.size(), workers, [&](std::size_t i) {
      out.trials[i] =
          evaluate_trial(space, schedule[i], objective, trial_seed(seed, space, schedule[i]), i);
    });
  }
  out.iterations = out.trials.size();
  out.filter = budget_filter(out.trials, budget);
  return out;
}

// ---------------------------------------------------------------------------
// Repetition harness

struct TuneSummary {
  Strategy strategy = Strategy::grid;
  std::size_t n = 0;
  std::size_t repetitions = 0;
  std::size_t successes = 0;  // repetitions with a non-empty feasible set
  double success_rate = 0.0;
  // Statistics of the best feasible acc_adv over successful repetitions.
  std::optional<double> mean_best_adv;
  std::optional<double> std_best_adv;
  std::optional<stats::Interval> ci95_best_adv;
};

struct TuneResult {
  std::vector<TunerOutcome> outcomes;
  TuneSummary summary;
};

inline std::uint64_t repetition_seed(std::uint64_t root, std::size_t rep) {
  return derive_seed(root, {stream::kRepetition, rep});
}

inline TuneSummary summarize(Strategy strategy, std::size_t n,
                             std::span<const TunerOutcome> outcomes) {
  TuneSummary s{strategy, n, outcomes.size(), 0, 0.0, {}, {}, {}};
  std::vector<double> best;
  for (const auto& o : outcomes)
    if (o.error.empty() && o.best()) best.push_back(o.best()->acc_adv);
  s.successes = best.size();
  s.success_rate = outcomes.empty() ? 0.0
                                    : static_cast<double>(best.size()) /
                                          static_cast<double>(outcomes.size());
  if (!best.empty()) {
    s.mean_best_adv = stats::mean(best);
    s.std_best_adv = stats::stddev(best);
    s.ci95_best_adv = stats::ci95(best);
  }
  return s;
}

// Re-applies a budget to finished runs; the trials are left untouched.
inline TuneResult refilter(TuneResult result, const Budget& budget) {
  for (auto& o : result.outcomes)
    if (o.error.empty()) o.filter = budget_filter(o.trials, budget);
  result.summary = summarize(result.summary.strategy, result.summary.n, result.outcomes);
  return result;
}

// Runs a strategy `repetitions` times (grid always once) with seeds derived
// from the root. A repetition that throws is recorded and does not stop the
// others. Repetitions run in parallel; a single repetition parallelizes its
// own trials instead.
inline TuneResult tune(Strategy strategy, const SearchSpace& space, std::size_t n,
                       const Budget& budget, const Objective& objective,
                       std::size_t repetitions, std::uint64_t root_seed,
                       const TpeParams& tpe = {}, std::size_t workers = 1) {
  space.validate();
  budget.validate();
  detail::check_iterations(space, n);
  if (repetitions < 1) throw SpecError("repetitions must be >= 1");
  if (strategy == Strategy::grid) repetitions = 1;

  TuneResult result;
  result.outcomes.resize(repetitions);
  const std::size_t inner = repetitions == 1 ? workers : 1;
  parallel_for(repetitions, repetitions == 1 ? 1 : workers, [&](std::size_t r) {
    const std::uint64_t seed = repetition_seed(root_seed, r);
    try {
      result.outcomes[r] = run_strategy(strategy, space, n, objective, budget, seed, tpe, inner);
    } catch (const Error& e) {
      result.outcomes[r] = TunerOutcome{strategy, seed, {}, {}, 0, e.what()};
    }
  });
  result.summary = summarize(strategy, n, result.outcomes);
  return result;
}

}  // namespace advtune
