#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "advtune/adv_training.hpp"
#include "advtune/evaluation.hpp"
#include "advtune/pgd.hpp"
#include "test_support.hpp"

using namespace advtune;
using advtune::testing::random_labels;
using advtune::testing::random_tensor;

namespace {

// Linear-softmax model: logits = x W + b.
NetworkSpec linear_spec(std::size_t dims, std::size_t classes) {
  return {{dims}, {Dense{dims, classes}}, classes};
}

// d/dx of the softmax cross-entropy for one sample of a linear model,
// computed directly: W (p - onehot).
std::vector<double> linear_input_gradient(const Params& p, std::span<const double> x, int y,
                                          std::size_t classes) {
  const Tensor& w = p.layers[0].weight;
  const std::size_t d = x.size();
  std::vector<double> z(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    z[c] = p.layers[0].bias[c];
    for (std::size_t i = 0; i < d; ++i) z[c] += x[i] * w[i * classes + c];
  }
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) s += (v = std::exp(v - m));
  std::vector<double> g(d, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double delta = z[c] / s - (static_cast<int>(c) == y ? 1.0 : 0.0);
    for (std::size_t i = 0; i < d; ++i) g[i] += w[i * classes + c] * delta;
  }
  return g;
}

}  // namespace

TEST(Pgd, ZeroEpsilonReturnsInputExactly) {
  const auto spec = advtune::testing::small_mlp();
  const Params p = init_network(spec, 1);
  const Tensor x = random_tensor({5, 6}, 2);
  AttackConfig cfg{.epsilon = 0.0, .random_start = true, .seed = 3};
  EXPECT_EQ(pgd_perturb(p, spec, x, random_labels(5, 4, 1), cfg), x);
}

TEST(Pgd, SingleStepMatchesAnalyticSignGradient) {
  const std::size_t d = 5, c = 3;
  const auto spec = linear_spec(d, c);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Params p = init_network(spec, seed);
    const Tensor x = random_tensor({4, d}, seed + 50, 0.2, 0.8);
    const auto y = random_labels(4, c, seed);
    const AttackConfig cfg{.epsilon = 0.1, .step_size = 0.1, .max_iterations = 1,
                           .random_start = false};
    const Tensor adv = pgd_perturb(p, spec, x, y, cfg);
    for (std::size_t n = 0; n < 4; ++n) {
      const auto g = linear_input_gradient(p, x.row(n), y[n], c);
      for (std::size_t i = 0; i < d; ++i) {
        const double sign = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
        EXPECT_NEAR(adv.row(n)[i], x.row(n)[i] + 0.1 * sign, 1e-12);
      }
    }
  }
}

TEST(Pgd, FgsmStepFromHalfGoesToPointSix) {
  // One input component whose gradient is positive: increasing x lowers the
  // true-class logit.
  const NetworkSpec spec = linear_spec(1, 2);
  Params p = zero_params(spec);
  p.layers[0].weight = Tensor({1, 2}, {-1.0, 1.0});
  const std::vector<int> y{0};
  const Tensor x({1, 1}, {0.5});
  const GradientBundle g = loss_forward_backward(p, spec, x, y);
  ASSERT_GT(g.input_grads[0], 0.0);
  const AttackConfig cfg{.epsilon = 0.1, .step_size = 0.1, .max_iterations = 1,
                         .random_start = false};
  EXPECT_NEAR(pgd_perturb(p, spec, x, y, cfg)[0], 0.6, 1e-15);
}

TEST(Pgd, StepPastUpperBoundIsClipped) {
  const NetworkSpec spec = linear_spec(1, 2);
  Params p = zero_params(spec);
  p.layers[0].weight = Tensor({1, 2}, {-1.0, 1.0});
  const std::vector<int> y{0};
  const AttackConfig cfg{.epsilon = 0.3, .step_size = 0.3, .max_iterations = 1,
                         .random_start = false};
  EXPECT_EQ(pgd_perturb(p, spec, Tensor({1, 1}, {0.98}), y, cfg)[0], 1.0);
}

TEST(Pgd, DeadGradientLeavesComponentUnmoved) {
  // A zero weight row gives a zero input gradient, and sign(0) = 0.
  const NetworkSpec spec = linear_spec(2, 2);
  Params p = zero_params(spec);
  p.layers[0].weight = Tensor({2, 2}, {-1.0, 1.0, 0.0, 0.0});
  const std::vector<int> y{0};
  const AttackConfig cfg{.epsilon = 0.2, .step_size = 0.05, .max_iterations = 3,
                         .random_start = false};
  const Tensor adv = pgd_perturb(p, spec, Tensor({1, 2}, {0.5, 0.5}), y, cfg);
  EXPECT_EQ(adv[1], 0.5);
  EXPECT_NEAR(adv[0], 0.65, 1e-15);
}

TEST(Pgd, BoundAndRangeHoldOverRandomInvocations) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto spec = trial % 2 ? advtune::testing::small_mlp() : advtune::testing::small_convnet();
    Shape bs{3};
    bs.insert(bs.end(), spec.input_shape.begin(), spec.input_shape.end());
    const Params p = init_network(spec, static_cast<std::uint64_t>(trial));
    const Tensor x = random_tensor(bs, static_cast<std::uint64_t>(trial) + 1000);
    AttackConfig cfg{.epsilon = 0.5 * u(rng),
                     .step_size = 0.01 + 0.2 * u(rng),
                     .max_iterations = 1 + static_cast<std::size_t>(5 * u(rng)),
                     .random_start = trial % 3 != 0,
                     .seed = static_cast<std::uint64_t>(trial)};
    const Tensor adv =
        pgd_perturb(p, spec, x, random_labels(3, spec.classes, static_cast<std::uint64_t>(trial)), cfg);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(adv[i] - x[i]) > cfg.epsilon + 1e-12 || adv[i] < 0.0 || adv[i] > 1.0)
        ++violations;
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Pgd, CustomClipRange) {
  const auto spec = advtune::testing::small_mlp();
  const Params p = init_network(spec, 3);
  const Tensor x = random_tensor({4, 6}, 1, -0.5, 0.5);
  const AttackConfig cfg{.epsilon = 0.4, .step_size = 0.2, .max_iterations = 5,
                         .random_start = true, .clip_min = -0.5, .clip_max = 0.5, .seed = 1};
  const Tensor adv = pgd_perturb(p, spec, x, random_labels(4, 4, 1), cfg);
  for (double v : adv.values()) {
    EXPECT_GE(v, -0.5);
    EXPECT_LE(v, 0.5);
  }
  AttackConfig default_range = cfg;
  default_range.clip_min = 0.0;
  default_range.clip_max = 1.0;
  EXPECT_THROW(pgd_perturb(p, spec, x, random_labels(4, 4, 1), default_range), InputError);
}

TEST(Pgd, SeededRandomStartIsDeterministic) {
  const auto spec = advtune::testing::small_convnet();
  const Params p = init_network(spec, 3);
  const Tensor x = random_tensor({4, 2, 8, 8}, 1);
  const auto y = random_labels(4, 3, 1);
  AttackConfig cfg{.epsilon = 0.2, .step_size = 0.05, .max_iterations = 4, .random_start = true,
                   .seed = 11};
  EXPECT_EQ(pgd_perturb(p, spec, x, y, cfg), pgd_perturb(p, spec, x, y, cfg));
  AttackConfig other = cfg;
  other.seed = 12;
  EXPECT_NE(pgd_perturb(p, spec, x, y, cfg), pgd_perturb(p, spec, x, y, other));
}

TEST(Pgd, InvalidConfigRejected) {
  EXPECT_THROW((AttackConfig{.epsilon = -0.1}.validate()), SpecError);
  EXPECT_THROW((AttackConfig{.step_size = 0.0}.validate()), SpecError);
  EXPECT_THROW((AttackConfig{.max_iterations = 0}.validate()), SpecError);
  EXPECT_THROW((AttackConfig{.clip_min = 1.0, .clip_max = 1.0}.validate()), SpecError);
}

TEST(Pgd, FinalLossUsuallyExceedsStartLoss) {
  // Statistical: over trained models and random batches the final iterate
  // raises the mean loss relative to the projected random start.
  const LabeledSet data = synth_blobs(3, 80, 6, 0.25, 4);
  const auto spec = advtune::testing::blob_mlp(6, 3);
  std::size_t ok = 0, total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    AdvTrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 20;
    tc.learning_rate = 0.2;
    tc.seed = s;
    const Params p = train_clean(data, tc, spec).params;
    std::vector<std::size_t> rows(16);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (s * 16 + i) % data.size();
    const LabeledSet batch = data.subset(rows);
    const AttackConfig start{.epsilon = 0.1, .step_size = 1e-9, .max_iterations = 1,
                             .random_start = true, .seed = s};
    AttackConfig full = start;
    full.step_size = 0.02;
    full.max_iterations = 10;
    const double l0 =
        mean_loss(p, spec, pgd_perturb(p, spec, batch.features, batch.labels, start), batch.labels);
    const double l1 =
        mean_loss(p, spec, pgd_perturb(p, spec, batch.features, batch.labels, full), batch.labels);
    ok += l1 >= l0;
    ++total;
  }
  EXPECT_GE(static_cast<double>(ok), 0.95 * static_cast<double>(total));
}

TEST(AttackInputs, ZeroEpsilonIsIdentityAndLabelsKept) {
  const LabeledSet data = synth_blobs(3, 10, 4, 0.2, 1);
  const auto spec = advtune::testing::blob_mlp(4, 3);
  const Params p = init_network(spec, 2);
  EXPECT_EQ(attack_accuracy_inputs(data, p, spec, {.epsilon = 0.0}), data);
  const LabeledSet adv = attack_accuracy_inputs(
      data, p, spec, {.epsilon = 0.2, .step_size = 0.05, .max_iterations = 5, .seed = 1}, 7);
  EXPECT_EQ(adv.labels, data.labels);
  for (std::size_t i = 0; i < data.features.size(); ++i)
    EXPECT_LE(std::abs(adv.features[i] - data.features[i]), 0.2 + 1e-12);
}

TEST(AttackInputs, UntrainedNetsLoseAccuracyUnderAttack) {
  const LabeledSet data = synth_blobs(3, 40, 6, 0.15, 5);
  std::size_t holds = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto spec = advtune::testing::blob_mlp(6, 3);
    const Params p = init_network(spec, s);
    const double clean = clean_accuracy(p, spec, data);
    const double adv = clean_accuracy(
        p, spec,
        attack_accuracy_inputs(data, p, spec,
                               {.epsilon = 0.1, .step_size = 0.02, .max_iterations = 10,
                                .random_start = true, .seed = s}));
    holds += adv <= clean;
  }
  EXPECT_GE(holds, 19u);
}
