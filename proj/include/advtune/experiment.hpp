#pragma once

#include <chrono>
#include <cstdint>

#include "advtune/adv_training.hpp"
#include "advtune/evaluation.hpp"
#include "advtune/rng.hpp"

namespace advtune {

// One adversarial training run at (ratio, epsilon) followed by clean and
// adversarial evaluation. Shared by the surface sweep and the tuner so a
// configuration measured with the same seed gives the same numbers in both.
struct Measurement {
  double acc_test = 0.0;
  double acc_adv = 0.0;
  double duration_seconds = 0.0;
};

inline AdvTrainConfig run_config(const AdvTrainConfig& base, double ratio, double epsilon,
                                 std::uint64_t seed) {
  AdvTrainConfig cfg = base.with(ratio, epsilon);
  cfg.seed = seed;
  return cfg;
}

inline AttackConfig eval_attack_for(AttackConfig eval_attack, std::uint64_t seed) {
  eval_attack.seed = derive_seed(seed, {stream::kEvalAttack});
  return eval_attack;
}

inline Measurement train_and_measure(const LabeledSet& train, const LabeledSet& eval,
                                     const NetworkSpec& spec, const AdvTrainConfig& base,
                                     double ratio, double epsilon,
                                     const AttackConfig& eval_attack, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainReport report = adversarial_train(train, run_config(base, ratio, epsilon, seed), spec);
  const EvalResult r = evaluate(report.params, spec, eval, eval_attack_for(eval_attack, seed));
  return {r.acc_test, r.acc_adv,
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
}

}  // namespace advtune
