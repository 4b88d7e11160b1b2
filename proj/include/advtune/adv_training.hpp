#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "advtune/dataset.hpp"
#include "advtune/errors.hpp"
#include "advtune/network.hpp"
#include "advtune/pgd.hpp"
#include "advtune/rng.hpp"

namespace advtune {

struct AdvTrainConfig {
  // Fraction of each batch replaced with adversarial counterparts.
  double ratio = 0.0;
  // Training-time PGD; attack.epsilon is the training epsilon.
  AttackConfig attack{.epsilon = 0.3, .step_size = 0.01, .max_iterations = 7,
                      .random_start = true};
  std::size_t epochs = 1;
  std::size_t batch_size = 50;
  double learning_rate = 0.05;
  // Heavy-ball momentum; 0 is plain SGD.
  double momentum = 0.0;
  // Training epsilon ramps linearly from 0 to attack.epsilon over this many
  // epochs (0 disables the ramp).
  double epsilon_warmup_epochs = 0.0;
  std::uint64_t seed = 0;

  double train_epsilon() const { return attack.epsilon; }

  AdvTrainConfig with(double new_ratio, double epsilon) const {
    AdvTrainConfig c = *this;
    c.ratio = new_ratio;
    c.attack.epsilon = epsilon;
    return c;
  }

  void validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw SpecError("ratio must lie in [0,1]");
    attack.validate();
    if (epochs < 1) throw SpecError("epochs must be >= 1");
    if (batch_size < 1) throw SpecError("batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw SpecError("learning rate must be finite and > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw SpecError("momentum must lie in [0,1)");
    if (!(epsilon_warmup_epochs >= 0.0) || !std::isfinite(epsilon_warmup_epochs))
      throw SpecError("epsilon warm-up must be finite and >= 0");
  }

  friend bool operator==(const AdvTrainConfig&, const AdvTrainConfig&) = default;
};

struct TrainReport {
  Params params;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  double duration_seconds = 0.0;
  AdvTrainConfig config;
};

// Observes each batch right before its adversarial examples are generated.
struct BatchEvent {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t global_step = 0;
  // Number of SGD updates already applied to the parameters the attack sees.
  std::size_t params_version = 0;
  const Params* params = nullptr;
  std::span<const std::size_t> replaced;  // positions within the batch
};

struct TrainHooks {
  std::function<void(const BatchEvent&)> before_attack;
};

// k = round(ratio * B) distinct positions in [0, B), drawn uniformly without
// replacement and returned in ascending order.
inline std::vector<std::size_t> select_replacement_indices(std::size_t batch_size, double ratio,
                                                           Rng& rng) {
  if (batch_size < 1) throw SpecError("batch size must be >= 1");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw SpecError("ratio must lie in [0,1]");
  const auto k = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(batch_size)));
  std::vector<std::size_t> pool(batch_size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  if (k == batch_size) return pool;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, batch_size - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace detail {

inline std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t epoch) {
  return derive_seed(seed, {stream::kShuffle, epoch});
}

struct BatchData {
  Tensor x;
  std::vector<int> y;
};

inline BatchData gather_batch(const LabeledSet& data, std::span<const std::size_t> rows) {
  BatchData b{data.features.gather_rows(rows), {}};
  b.y.reserve(rows.size());
  for (std::size_t r : rows) b.y.push_back(data.labels[r]);
  return b;
}

// SGD with optional heavy-ball momentum: v <- mu*v + g, theta <- theta - lr*v.
// With mu = 0 every update is exactly sgd_update.
class Optimizer {
 public:
  Optimizer(const AdvTrainConfig& cfg, const Params& shape_like)
      : lr_(cfg.learning_rate), mu_(cfg.momentum) {
    if (mu_ > 0.0) velocity_ = zero_like(shape_like);
  }

  Params step(Params params, GradientBundle g, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(g.loss)) throw TrainingError("non-finite training loss", epoch, batch);
    try {
      if (mu_ > 0.0) {
        for (std::size_t li = 0; li < velocity_.layers.size(); ++li) {
          accumulate(velocity_.layers[li].weight, g.param_grads.layers.at(li).weight);
          accumulate(velocity_.layers[li].bias, g.param_grads.layers.at(li).bias);
        }
        g.param_grads = velocity_;
      }
      return sgd_update(std::move(params), g, lr_);
    } catch (const NumericError& e) {
      throw TrainingError(e.what(), epoch, batch);
    } catch (const DimensionError& e) {
      throw TrainingError(e.what(), epoch, batch);
    }
  }

 private:
  static Params zero_like(const Params& p) {
    Params z = p;
    for (auto& l : z.layers) {
      std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0);
      std::fill(l.bias.values().begin(), l.bias.values().end(), 0.0);
    }
    return z;
  }
  void accumulate(Tensor& v, const Tensor& g) const {
    if (v.shape() != g.shape()) throw DimensionError("gradient shape mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = mu_ * v[i] + g[i];
  }

  double lr_, mu_;
  Params velocity_;
};

// Attack epsilon in effect at a global step under the linear warm-up.
inline double ramped_epsilon(const AdvTrainConfig& cfg, std::size_t step,
                             std::size_t batches_per_epoch) {
  if (cfg.epsilon_warmup_epochs <= 0.0) return cfg.attack.epsilon;
  const double ramp_steps = cfg.epsilon_warmup_epochs * static_cast<double>(batches_per_epoch);
  return cfg.attack.epsilon * std::min(1.0, static_cast<double>(step) / ramp_steps);
}

inline void check_training_inputs(const LabeledSet& train, const NetworkSpec& spec) {
  if (train.size() == 0) throw InputError("training set is empty");
  if (train.class_count != spec.classes)
    throw SpecError("dataset has " + std::to_string(train.class_count) +
                    " classes, network outputs " + std::to_string(spec.classes));
}

}  // namespace detail

// Plain ERM with mini-batch SGD. Shares the shuffle and initialization seed
// discipline with adversarial_train.
inline TrainReport train_clean(const LabeledSet& train, const AdvTrainConfig& cfg,
                               const NetworkSpec& spec) {
  cfg.validate();
  detail::check_training_inputs(train, spec);
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report{init_network(spec, cfg.seed), {}, 0.0, cfg};
  detail::Optimizer opt(cfg, report.params);
  const std::size_t bs = std::min(cfg.batch_size, train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto order = batches(train.size(), bs, detail::shuffle_seed(cfg.seed, epoch));
    for (std::size_t t = 0; t < order.size(); ++t) {
      const detail::BatchData b = detail::gather_batch(train, order[t]);
      GradientBundle g =
          compute_gradients(report.params, spec, b.x, b.y, {.params = true, .inputs = false});
      loss_sum += g.loss * static_cast<double>(b.y.size());
      report.params = opt.step(std::move(report.params), std::move(g), epoch, t);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
  }
  report.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Min-max training: for every batch, a ratio-fraction of the examples is
// replaced by PGD examples crafted against the current parameters (labels
// kept), then one SGD step is taken on the mixed batch.
inline TrainReport adversarial_train(const LabeledSet& train, const AdvTrainConfig& cfg,
                                     const NetworkSpec& spec, const TrainHooks& hooks = {}) {
  cfg.validate();
  detail::check_training_inputs(train, spec);
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report{init_network(spec, cfg.seed), {}, 0.0, cfg};
  detail::Optimizer opt(cfg, report.params);
  const std::size_t bs = std::min(cfg.batch_size, train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto order = batches(train.size(), bs, detail::shuffle_seed(cfg.seed, epoch));
    for (std::size_t t = 0; t < order.size(); ++t, ++step) {
      detail::BatchData b = detail::gather_batch(train, order[t]);
      Rng replace_rng(derive_seed(cfg.seed, {stream::kReplace, epoch, t}));
      const auto replaced = select_replacement_indices(b.y.size(), cfg.ratio, replace_rng);

      if (!replaced.empty()) {
        if (hooks.before_attack)
          hooks.before_attack(BatchEvent{epoch, t, step, step, &report.params, replaced});
        AttackConfig acfg = cfg.attack;
        acfg.epsilon = detail::ramped_epsilon(cfg, step, order.size());
        if (acfg.epsilon > 0.0) {
          const Tensor sub_x = b.x.gather_rows(replaced);
          std::vector<int> sub_y;
          sub_y.reserve(replaced.size());
          for (std::size_t i : replaced) sub_y.push_back(b.y[i]);
          acfg.seed = derive_seed(cfg.seed, {stream::kAttack, epoch, t});
          Tensor adv;
          try {
            adv = pgd_perturb(report.params, spec, sub_x, sub_y, acfg);
          } catch (const NumericError& e) {
            throw TrainingError(e.what(), epoch, t);
          }
          for (std::size_t i = 0; i < replaced.size(); ++i) {
            const auto src = adv.row(i);
            std::copy(src.begin(), src.end(), b.x.row(replaced[i]).begin());
          }
        }
      }

      GradientBundle g =
          compute_gradients(report.params, spec, b.x, b.y, {.params = true, .inputs = false});
      loss_sum += g.loss * static_cast<double>(b.y.size());
      report.params = opt.step(std::move(report.params), std::move(g), epoch, t);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
  }
  report.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace advtune
