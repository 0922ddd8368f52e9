#include "nilm/training.hpp"

#include <gtest/gtest.h>

#include "nilm/random.hpp"
#include "nilm/synthetic.hpp"

using namespace nilm;

namespace {

const NormalizationParams kMainsNorm{522.0, 814.0};
const NormalizationParams kApplNorm{200.0, 400.0};

Seq2PointModel tiny_model(std::uint64_t seed = 0, std::size_t W = 9) {
  return build_model(W, kMainsNorm, kApplNorm, "target",
                     {LayerSpec::conv1d(2, 3), LayerSpec::relu(),
                      LayerSpec::dense(4), LayerSpec::relu(),
                      LayerSpec::dense(1)},
                     seed);
}

WindowBatch random_batch(std::size_t n, std::size_t W, std::uint64_t seed) {
  Rng rng(seed);
  WindowBatch batch;
  batch.inputs = Tensor<float>({n, W});
  for (auto& v : batch.inputs.data) v = static_cast<float>(rng.normal());
  batch.targets.resize(n);
  for (auto& t : batch.targets) t = static_cast<float>(rng.normal());
  return batch;
}

bool params_equal(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].weight.data != b[i].weight.data ||
        a[i].bias.data != b[i].bias.data)
      return false;
  return true;
}

}  // namespace

TEST(EarlyStopping, ScriptedSequenceStopsAtEightBestAtThree) {
  const std::vector<double> losses{5, 4, 3, 3.5, 3.6, 3.7, 3.8, 3.9};
  EarlyStopping stopper(/*patience=*/5, /*min_epochs=*/5);
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    stopper.observe(losses[i]);
    if (stopper.should_stop()) {
      stopped = i + 1;
      break;
    }
  }
  EXPECT_EQ(stopped, 8u);
  EXPECT_EQ(stopper.best_epoch(), 3u);
}

TEST(EarlyStopping, PatienceSixMirrorsNinthEpochStop) {
  // Same shape of loss curve, patience 6: stop at epoch 9, minimum at 3.
  const std::vector<double> losses{5, 4, 3, 3.5, 3.6, 3.7, 3.8, 3.9, 4.0, 4.1};
  EarlyStopping stopper(6, 5);
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    stopper.observe(losses[i]);
    if (stopper.should_stop()) {
      stopped = i + 1;
      break;
    }
  }
  EXPECT_EQ(stopped, 9u);
  EXPECT_EQ(stopper.best_epoch(), 3u);
}

TEST(EarlyStopping, TiesGoToEarliestEpoch) {
  EarlyStopping stopper(3, 0);
  stopper.observe(2.0);
  stopper.observe(2.0);  // not an improvement
  stopper.observe(1.5);
  stopper.observe(1.5);
  EXPECT_EQ(stopper.best_epoch(), 3u);
}

TEST(Train, ScriptedValidationRestoresBestEpochParameters) {
  const std::vector<double> script{5, 4, 3, 3.5, 3.6, 3.7, 3.8, 3.9, 1.0};
  auto model = tiny_model(1);
  const auto batch = random_batch(64, 9, 2);

  TrainConfig config;
  config.max_epochs = 50;
  config.batch_size = 16;
  config.patience = 5;
  config.min_epochs_before_stop = 5;
  config.seed = 3;

  std::vector<ParamSet<float>> snapshots;
  auto result = train_with_validation(
      std::move(model), batch, config,
      [&](const Seq2PointModel& m, std::size_t epoch) {
        snapshots.push_back(m.params);
        return script.at(epoch - 1);
      });

  EXPECT_EQ(result.history.stopped_epoch, 8u);
  EXPECT_EQ(result.history.best_epoch, 3u);
  // The script's epoch 9 value of 1.0 must never be reached.
  EXPECT_EQ(result.history.val_loss.size(), 8u);
  EXPECT_EQ(result.history.val_loss.back(), 3.9);
  ASSERT_GE(snapshots.size(), 3u);
  EXPECT_TRUE(params_equal(result.model.params, snapshots[2]));
  EXPECT_FALSE(params_equal(result.model.params, snapshots[7]));
}

TEST(Train, ZeroMaxEpochsReturnsInitialModel) {
  auto model = tiny_model(4);
  const auto initial = model.params;
  const auto batch = random_batch(10, 9, 5);
  TrainConfig config;
  config.max_epochs = 0;
  config.min_epochs_before_stop = 0;
  const auto result = train(std::move(model), batch, batch, config);
  EXPECT_TRUE(params_equal(result.model.params, initial));
  EXPECT_TRUE(result.history.train_loss.empty());
  EXPECT_EQ(result.history.stopped_epoch, 0u);
}

TEST(Train, ZeroLearningRateFreezesParameters) {
  auto model = tiny_model(6);
  const auto initial = model.params;
  const auto batch = random_batch(32, 9, 7);
  TrainConfig config;
  config.max_epochs = 4;
  config.min_epochs_before_stop = 0;
  config.patience = 10;
  config.batch_size = 8;
  config.learning_rate = 0.0f;
  const auto result = train(std::move(model), batch, batch, config);
  EXPECT_TRUE(params_equal(result.model.params, initial));
  for (std::size_t i = 1; i < result.history.train_loss.size(); ++i)
    EXPECT_EQ(result.history.train_loss[i], result.history.train_loss[0]);
}

TEST(Train, EmptySourcesRejected) {
  auto model = tiny_model(8);
  WindowBatch empty;
  const auto batch = random_batch(8, 9, 9);
  EXPECT_THROW(train(std::move(model), empty, batch, TrainConfig{}),
               DataError);
  auto model2 = tiny_model(8);
  EXPECT_THROW(train(std::move(model2), batch, empty, TrainConfig{}),
               DataError);
}

TEST(Train, DeterministicGivenSeed) {
  const auto batch = random_batch(64, 9, 10);
  TrainConfig config;
  config.max_epochs = 3;
  config.min_epochs_before_stop = 0;
  config.batch_size = 16;
  config.seed = 42;

  const auto a = train(tiny_model(11), batch, batch, config);
  const auto b = train(tiny_model(11), batch, batch, config);
  EXPECT_TRUE(params_equal(a.model.params, b.model.params));
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
}

TEST(Train, BestEpochNeverWorseThanAnyRecordedEpoch) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> script(12);
    for (auto& v : script) v = 1.0 + rng.uniform() * 4.0;
    TrainConfig config;
    config.max_epochs = 12;
    config.min_epochs_before_stop = 2;
    config.patience = 3;
    config.batch_size = 32;
    const auto batch = random_batch(16, 9, 13);
    const auto result = train_with_validation(
        tiny_model(trial), batch, config,
        [&](const Seq2PointModel&, std::size_t epoch) {
          return script.at(epoch - 1);
        });
    const auto& vl = result.history.val_loss;
    const double best = vl.at(result.history.best_epoch - 1);
    for (double v : vl) EXPECT_LE(best, v);
  }
}

// Identity task: the appliance equals the mains, so the regression target is
// a (normalized) affine function of the window midpoint. Training must cut
// the validation loss to well under 5% of the untrained model's loss.
TEST(Train, IdentityTaskConvergesTowardZeroLoss) {
  SyntheticConfig synth;
  synth.length = 3000;
  synth.seed = 21;
  synth.appliances.push_back(
      {"target", {{1000.0, 240.0}}, 0.4});
  const auto hh = synthesize_household(synth);

  AlignedPair pair;
  pair.mains = hh.mains;
  pair.appliance = hh.appliances[0];

  const NormalizationParams norm{400.0, 500.0};
  const auto batch = make_training_pairs(pair, 21, norm, norm);

  auto model = build_model(21, norm, norm, "target",
                           {LayerSpec::conv1d(8, 5), LayerSpec::relu(),
                            LayerSpec::dense(16), LayerSpec::relu(),
                            LayerSpec::dense(1)},
                           22);
  const double initial_loss = evaluate_loss(model, batch);

  TrainConfig config;
  config.max_epochs = 12;
  config.min_epochs_before_stop = 3;
  config.patience = 4;
  config.batch_size = 128;
  config.seed = 23;
  const auto result = train(std::move(model), batch, batch, config);
  const double best = result.history.val_loss.at(result.history.best_epoch - 1);
  EXPECT_LT(best, 0.05 * initial_loss);
}
