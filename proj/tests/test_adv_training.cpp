#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "advtune/adv_training.hpp"
#include "advtune/evaluation.hpp"
#include "test_support.hpp"

using namespace advtune;

namespace {

AdvTrainConfig blob_config(double ratio, double eps, std::uint64_t seed) {
  AdvTrainConfig c;
  c.ratio = ratio;
  c.attack = {.epsilon = eps, .step_size = eps / 3, .max_iterations = 5, .random_start = true};
  c.epochs = 3;
  c.batch_size = 25;
  c.learning_rate = 0.2;
  c.seed = seed;
  return c;
}

// Chi-square critical value at the 0.01 level for 49 degrees of freedom.
constexpr double kChi2_49_001 = 74.919;

}  // namespace

TEST(ReplacementIndices, ExtremesAndCount) {
  Rng rng(1);
  EXPECT_TRUE(select_replacement_indices(50, 0.0, rng).empty());
  const auto all = select_replacement_indices(50, 1.0, rng);
  std::vector<std::size_t> expect(50);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  EXPECT_EQ(all, expect);
  const auto half = select_replacement_indices(50, 0.5, rng);
  EXPECT_EQ(half.size(), 25u);
  EXPECT_TRUE(std::adjacent_find(half.begin(), half.end(),
                                 [](auto a, auto b) { return a >= b; }) == half.end());
}

TEST(ReplacementIndices, RoundsHalfAwayFromZero) {
  Rng rng(1);
  EXPECT_EQ(select_replacement_indices(5, 0.5, rng).size(), 3u);   // 2.5 -> 3
  EXPECT_EQ(select_replacement_indices(50, 0.01, rng).size(), 1u); // 0.5 -> 1
  EXPECT_EQ(select_replacement_indices(50, 0.009, rng).size(), 0u);
  EXPECT_THROW(select_replacement_indices(0, 0.5, rng), SpecError);
  EXPECT_THROW(select_replacement_indices(5, 1.5, rng), SpecError);
}

TEST(ReplacementIndices, DeterministicPerRngState) {
  Rng a(9), b(9);
  EXPECT_EQ(select_replacement_indices(50, 0.3, a), select_replacement_indices(50, 0.3, b));
}

TEST(ReplacementIndices, PositionsAreUniform) {
  Rng rng(2024);
  std::vector<double> counts(50, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    for (std::size_t k : select_replacement_indices(50, 0.5, rng)) counts[k] += 1.0;
  const double expected = draws * 25.0 / 50.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, kChi2_49_001);
}

TEST(AdversarialTrain, RatioZeroIsBitIdenticalToCleanTraining) {
  const LabeledSet data = synth_blobs(3, 60, 6, 0.2, 1);
  const auto spec = advtune::testing::blob_mlp(6, 3);
  const AdvTrainConfig cfg = blob_config(0.0, 0.3, 17);
  const TrainReport adv = adversarial_train(data, cfg, spec);
  const TrainReport clean = train_clean(data, cfg, spec);
  EXPECT_EQ(adv.params, clean.params);
  EXPECT_EQ(adv.epoch_loss, clean.epoch_loss);
}

TEST(AdversarialTrain, RatioZeroReductionHoldsWithMomentumAndConv) {
  const LabeledSet data = synth_blobs(2, 30, 128, 0.2, 3).reshaped({2, 8, 8});
  const NetworkSpec spec = advtune::testing::small_convnet();
  NetworkSpec two = spec;
  two.classes = 2;
  two.layers.back() = Dense{2, 2};
  AdvTrainConfig cfg = blob_config(0.0, 0.2, 5);
  cfg.momentum = 0.9;
  cfg.batch_size = 16;
  EXPECT_EQ(adversarial_train(data, cfg, two).params, train_clean(data, cfg, two).params);
}

TEST(AdversarialTrain, SeededTrajectoryIsReproducible) {
  const LabeledSet data = synth_blobs(3, 40, 5, 0.2, 2);
  const auto spec = advtune::testing::blob_mlp(5, 3);
  const AdvTrainConfig cfg = blob_config(0.6, 0.2, 4);
  const TrainReport a = adversarial_train(data, cfg, spec);
  const TrainReport b = adversarial_train(data, cfg, spec);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(a.config, cfg);
  for (double l : a.epoch_loss) EXPECT_TRUE(std::isfinite(l));
  AdvTrainConfig other = cfg;
  other.seed = 5;
  EXPECT_NE(adversarial_train(data, other, spec).params, a.params);
}

TEST(AdversarialTrain, AttackSeesParametersAfterPreviousUpdates) {
  const LabeledSet data = synth_blobs(3, 40, 5, 0.2, 2);
  const auto spec = advtune::testing::blob_mlp(5, 3);
  AdvTrainConfig cfg = blob_config(0.4, 0.2, 4);
  cfg.epochs = 2;

  std::vector<Params> seen;
  std::vector<std::size_t> versions;
  TrainHooks hooks;
  hooks.before_attack = [&](const BatchEvent& e) {
    seen.push_back(*e.params);
    versions.push_back(e.params_version);
    EXPECT_EQ(e.params_version, e.global_step);
    // 120 samples in batches of 25: the last batch holds 20.
    EXPECT_EQ(e.replaced.size(), e.batch == 4 ? 8u : 10u);
  };
  const TrainReport report = adversarial_train(data, cfg, spec, hooks);
  ASSERT_EQ(seen.size(), 2u * 5u);
  for (std::size_t i = 0; i < versions.size(); ++i) EXPECT_EQ(versions[i], i);
  EXPECT_EQ(seen.front(), init_network(spec, cfg.seed));
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_NE(seen[i], seen[i - 1]);
  EXPECT_NE(seen.back(), report.params);
}

TEST(AdversarialTrain, LabelsArePreservedInEveryBatch) {
  // Replaced examples keep their labels, so half-adversarial batches still
  // train a perfect classifier on well-separated blobs.
  const LabeledSet data = synth_blobs(2, 50, 4, 0.05, 8);
  const auto spec = advtune::testing::blob_mlp(4, 2);
  AdvTrainConfig cfg = blob_config(0.5, 0.05, 1);
  cfg.epochs = 10;
  const TrainReport r = adversarial_train(data, cfg, spec);
  EXPECT_EQ(clean_accuracy(r.params, spec, data), 1.0);
}

TEST(AdversarialTrain, DivergenceReportsEpochAndBatch) {
  const LabeledSet data = synth_blobs(3, 20, 4, 0.2, 1);
  const auto spec = advtune::testing::blob_mlp(4, 3);
  AdvTrainConfig cfg = blob_config(0.5, 0.1, 1);
  cfg.learning_rate = 1e300;
  try {
    adversarial_train(data, cfg, spec);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_LT(e.epoch(), cfg.epochs);
  }
}

TEST(AdversarialTrain, ConfigValidation) {
  AdvTrainConfig c;
  c.ratio = 1.2;
  EXPECT_THROW(c.validate(), SpecError);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), SpecError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), SpecError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), SpecError);
  const LabeledSet data = synth_blobs(3, 5, 4, 0.2, 1);
  EXPECT_THROW(adversarial_train(data, AdvTrainConfig{}, advtune::testing::blob_mlp(4, 2)),
               SpecError);
}

TEST(AdversarialTrain, WarmupRampsEpsilonLinearly) {
  AdvTrainConfig c;
  c.attack.epsilon = 0.3;
  c.epsilon_warmup_epochs = 2.0;
  EXPECT_EQ(detail::ramped_epsilon(c, 0, 10), 0.0);
  EXPECT_DOUBLE_EQ(detail::ramped_epsilon(c, 10, 10), 0.15);
  EXPECT_DOUBLE_EQ(detail::ramped_epsilon(c, 20, 10), 0.3);
  EXPECT_DOUBLE_EQ(detail::ramped_epsilon(c, 500, 10), 0.3);
  c.epsilon_warmup_epochs = 0.0;
  EXPECT_EQ(detail::ramped_epsilon(c, 0, 10), 0.3);
}

TEST(AdversarialTrain, AdversarialTrainingImprovesRobustnessOnBlobs) {
  const LabeledSet all = synth_blobs(3, 150, 6, 0.25, 11);
  const Splits s = split(all, {50, 100, 3});
  const auto spec = advtune::testing::blob_mlp(6, 3, 32);
  const AttackConfig eval{.epsilon = 0.08, .step_size = 0.01, .max_iterations = 20,
                          .random_start = false};
  double clean_adv = 0.0, robust_adv = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    AdvTrainConfig cfg = blob_config(0.0, 0.08, seed);
    cfg.epochs = 20;
    cfg.attack.step_size = 0.02;
    clean_adv += adversarial_accuracy(adversarial_train(s.train, cfg, spec).params, spec, s.test, eval);
    cfg.ratio = 1.0;
    robust_adv += adversarial_accuracy(adversarial_train(s.train, cfg, spec).params, spec, s.test, eval);
  }
  EXPECT_GT(robust_adv, clean_adv);
}
