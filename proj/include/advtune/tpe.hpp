#pragma once

// Tree-structured Parzen Estimator over the discrete (ratio, epsilon) grid.
//
// History is split at the gamma-quantile of the objective (acc_adv,
// maximized) into a "good" and a "bad" set. Each set gets an independent
// per-dimension Parzen density built from truncated Gaussians centred on the
// observed values, plus one prior component centred on the interval. The
// bandwidth of each component is the larger gap to its sorted neighbours,
// clipped to [range / min(100, n + 1), range]. Candidates are drawn from the
// good density and ranked by l(x) / g(x); the winner is snapped to the nearest
// unexplored grid point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "advtune/rng.hpp"
#include "advtune/search_space.hpp"
#include "advtune/trial.hpp"

namespace advtune {

struct TpeParams {
  double gamma = 0.25;
  std::size_t n_init = 10;
  std::size_t n_candidates = 24;
  double prior_weight = 1.0;
};

// One-dimensional mixture of Gaussians truncated to [low, high].
class ParzenDensity {
 public:
  ParzenDensity(std::span<const double> observations, double low, double high,
                double prior_weight)
      : low_(low), high_(high) {
    const double range = high - low;
    const double prior_mu = 0.5 * (low + high);

    struct Component {
      double mu;
      bool prior;
    };
    std::vector<Component> sorted;
    sorted.reserve(observations.size() + 1);
    for (double o : observations) sorted.push_back({o, false});
    // The prior sits at its sorted position so it also shapes the gaps.
    sorted.push_back({prior_mu, true});
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Component& a, const Component& b) { return a.mu < b.mu; });

    const double min_sigma =
        range / std::min(100.0, static_cast<double>(observations.size()) + 1.0);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      double sigma = range;
      if (!sorted[i].prior) {
        if (sorted.size() == 1) {
          sigma = range;
        } else {
          const double left = i > 0 ? sorted[i].mu - sorted[i - 1].mu : 0.0;
          const double right = i + 1 < sorted.size() ? sorted[i + 1].mu - sorted[i].mu : 0.0;
          sigma = std::clamp(std::max(left, right), min_sigma, range);
        }
      }
      mus_.push_back(sorted[i].mu);
      sigmas_.push_back(sigma);
      weights_.push_back(sorted[i].prior ? prior_weight : 1.0);
    }
    double total = 0.0;
    for (double w : weights_) total += w;
    for (double& w : weights_) w /= total;
    for (std::size_t i = 0; i < mus_.size(); ++i)
      mass_.push_back(normal_cdf((high_ - mus_[i]) / sigmas_[i]) -
                      normal_cdf((low_ - mus_[i]) / sigmas_[i]));
  }

  double pdf(double x) const {
    if (x < low_ || x > high_) return 0.0;
    double p = 0.0;
    for (std::size_t i = 0; i < mus_.size(); ++i) {
      const double z = (x - mus_[i]) / sigmas_[i];
      p += weights_[i] * std::exp(-0.5 * z * z) /
           (sigmas_[i] * std::sqrt(2.0 * std::numbers::pi) * mass_[i]);
    }
    return p;
  }

  double log_pdf(double x) const {
    const double p = pdf(x);
    return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }

  double sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> pick(weights_.begin(), weights_.end());
    const std::size_t k = pick(rng);
    std::normal_distribution<double> draw(mus_[k], sigmas_[k]);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x = draw(rng);
      if (x >= low_ && x <= high_) return x;
    }
    return std::clamp(mus_[k], low_, high_);
  }

  std::span<const double> mus() const { return mus_; }
  std::span<const double> sigmas() const { return sigmas_; }
  std::span<const double> weights() const { return weights_; }

 private:
  static double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

  double low_, high_;
  std::vector<double> mus_, sigmas_, weights_, mass_;
};

namespace detail {

inline std::vector<bool> explored_mask(const SearchSpace& space, std::span<const Trial> history) {
  std::vector<bool> explored(space.size(), false);
  for (const Trial& t : history) explored.at(t.point.flat(space)) = true;
  return explored;
}

inline std::optional<GridPoint> random_unexplored(const SearchSpace& space,
                                                  const std::vector<bool>& explored, Rng& rng) {
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < explored.size(); ++i)
    if (!explored[i]) open.push_back(i);
  if (open.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
  return GridPoint::from_flat(space, open[pick(rng)]);
}

// Nearest unexplored grid point in range-normalized coordinates; ties go to
// the lowest (ratio index, eps index).
inline std::optional<GridPoint> snap_to_grid(const SearchSpace& space,
                                             const std::vector<bool>& explored, double ratio,
                                             double eps) {
  const double eps_range = space.eps_max - space.eps_min;
  std::optional<GridPoint> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < space.ratio_points; ++i)
    for (std::size_t j = 0; j < space.eps_points; ++j) {
      if (explored[i * space.eps_points + j]) continue;
      const double dr = space.ratio_value(i) - ratio;
      const double de = (space.eps_value(j) - eps) / eps_range;
      const double d = dr * dr + de * de;
      if (d < best_d) {
        best_d = d;
        best = GridPoint{i, j};
      }
    }
  return best;
}

}  // namespace detail

// Next grid point to evaluate, or nullopt once every point has been explored.
// Failed trials count as explored but do not inform the densities.
inline std::optional<GridPoint> tpe_propose(const SearchSpace& space,
                                            std::span<const Trial> history,
                                            const TpeParams& params, Rng& rng) {
  space.validate();
  const std::vector<bool> explored = detail::explored_mask(space, history);

  std::vector<const Trial*> usable;
  for (const Trial& t : history)
    if (!t.failed) usable.push_back(&t);
  if (usable.size() < std::max<std::size_t>(params.n_init, 2))
    return detail::random_unexplored(space, explored, rng);
  if (std::find(explored.begin(), explored.end(), false) == explored.end()) return std::nullopt;

  // Stable sort keeps insertion order among equal objectives.
  std::stable_sort(usable.begin(), usable.end(),
                   [](const Trial* a, const Trial* b) { return a->acc_adv > b->acc_adv; });
  const auto n_good = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(params.gamma * static_cast<double>(usable.size()))), 1,
      usable.size() - 1);

  std::vector<double> good_r, good_e, bad_r, bad_e;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    auto& r = i < n_good ? good_r : bad_r;
    auto& e = i < n_good ? good_e : bad_e;
    r.push_back(usable[i]->ratio);
    e.push_back(usable[i]->epsilon);
  }
  const ParzenDensity l_ratio(good_r, 0.0, 1.0, params.prior_weight);
  const ParzenDensity l_eps(good_e, space.eps_min, space.eps_max, params.prior_weight);
  const ParzenDensity g_ratio(bad_r, 0.0, 1.0, params.prior_weight);
  const ParzenDensity g_eps(bad_e, space.eps_min, space.eps_max, params.prior_weight);

  double best_score = -std::numeric_limits<double>::infinity();
  double best_r = 0.5, best_e = 0.5 * (space.eps_min + space.eps_max);
  for (std::size_t c = 0; c < std::max<std::size_t>(params.n_candidates, 1); ++c) {
    const double r = l_ratio.sample(rng);
    const double e = l_eps.sample(rng);
    const double score =
        l_ratio.log_pdf(r) + l_eps.log_pdf(e) - g_ratio.log_pdf(r) - g_eps.log_pdf(e);
    if (score > best_score) {
      best_score = score;
      best_r = r;
      best_e = e;
    }
  }
  return detail::snap_to_grid(space, explored, best_r, best_e);
}

}  // namespace advtune
