#include "nilm/transfer.hpp"

#include <gtest/gtest.h>

#include <chrono>

#include "nilm/random.hpp"
#include "nilm/synthetic.hpp"
#include "testutil.hpp"

using namespace nilm;

namespace {

const NormalizationParams kMains{522.0, 814.0};
const NormalizationParams kApplA{400.0, 700.0};
const NormalizationParams kApplB{700.0, 1000.0};

Seq2PointModel small_model(std::uint64_t seed = 1) {
  return build_model(21, kMains, kApplA, "appliance_a",
                     {LayerSpec::conv1d(4, 5), LayerSpec::relu(),
                      LayerSpec::conv1d(4, 3), LayerSpec::relu(),
                      LayerSpec::dense(16), LayerSpec::relu(),
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

std::vector<std::size_t> conv_indices(const Seq2PointModel& m) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.specs.size(); ++i)
    if (m.specs[i].kind == LayerKind::conv1d) idx.push_back(i);
  return idx;
}

AlignedPair pair_from(const SyntheticHousehold& hh, std::size_t which = 0) {
  AlignedPair p;
  p.mains = hh.mains;
  p.appliance = hh.appliances[which];
  return p;
}

}  // namespace

TEST(Freeze, EmptySelectorLeavesModelUnchanged) {
  const auto model = freeze(small_model(), FreezeSelector::none());
  for (const auto& s : model.specs) EXPECT_TRUE(s.trainable);
}

TEST(Freeze, ConvStackSelectorFreezesAllConvLayers) {
  const auto model = freeze(build_model(599, kMains, kApplB, "kettle", 3),
                            FreezeSelector::conv_stack());
  std::size_t frozen_conv = 0, trainable_dense = 0;
  for (const auto& s : model.specs) {
    if (s.kind == LayerKind::conv1d) {
      EXPECT_FALSE(s.trainable);
      ++frozen_conv;
    }
    if (s.kind == LayerKind::dense) {
      EXPECT_TRUE(s.trainable);
      ++trainable_dense;
    }
  }
  EXPECT_EQ(frozen_conv, 5u);
  EXPECT_EQ(trainable_dense, 2u);
}

TEST(Freeze, NamedSelector) {
  const auto model =
      freeze(small_model(), FreezeSelector::named({"conv2", "dense1"}));
  EXPECT_TRUE(model.specs[0].trainable);   // conv1
  EXPECT_FALSE(model.specs[2].trainable);  // conv2
  EXPECT_FALSE(model.specs[5].trainable);  // dense1 (flatten inserted at 4)
  EXPECT_TRUE(model.specs[7].trainable);   // dense2
}

TEST(Freeze, UnknownNameIsSelectorError) {
  EXPECT_THROW(freeze(small_model(), FreezeSelector::named({"conv9"})),
               SelectorError);
}

TEST(Freeze, FreezeAllThenTrainLeavesEveryParameterBitIdentical) {
  auto model = freeze(small_model(5), FreezeSelector::all());
  const auto snapshot = model.params;
  const auto batch = random_batch(64, 21, 6);
  TrainConfig config;
  config.max_epochs = 10;
  config.min_epochs_before_stop = 0;
  config.patience = 20;
  config.batch_size = 16;
  const auto result = train(std::move(model), batch, batch, config);
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    EXPECT_EQ(result.model.params[i].weight.data, snapshot[i].weight.data);
    EXPECT_EQ(result.model.params[i].bias.data, snapshot[i].bias.data);
  }
}

TEST(Atl, ConvParametersBitIdenticalAndHeadReinitialized) {
  const auto source = small_model(7);
  const auto train_batch = random_batch(96, 21, 8);
  const auto val_batch = random_batch(32, 21, 9);
  TrainConfig config;
  config.max_epochs = 3;
  config.min_epochs_before_stop = 0;
  config.batch_size = 32;
  config.seed = 10;

  const auto result = atl_transfer(source, "appliance_b", kApplB, train_batch,
                                   val_batch, config);
  for (std::size_t i : conv_indices(source)) {
    EXPECT_EQ(result.model.params[i].weight.data,
              source.params[i].weight.data);
    EXPECT_FALSE(result.model.specs[i].trainable);
  }
  EXPECT_EQ(result.model.appliance, "appliance_b");
  // The head was re-initialized from the seed and then trained; it must not
  // equal the source head.
  std::size_t dense_idx = 0;
  for (std::size_t i = 0; i < source.specs.size(); ++i)
    if (source.specs[i].kind == LayerKind::dense) dense_idx = i;
  EXPECT_NE(result.model.params[dense_idx].weight.data,
            source.params[dense_idx].weight.data);
}

TEST(Atl, WindowMismatchIsPlanError) {
  const auto source = small_model(11);
  const auto batch = random_batch(8, 33, 12);
  EXPECT_THROW(
      atl_transfer(source, "b", kApplB, batch, batch, TrainConfig{}),
      PlanError);
}

TEST(Atl, DeterministicGivenSeed) {
  const auto source = small_model(13);
  const auto train_batch = random_batch(64, 21, 14);
  const auto val_batch = random_batch(16, 21, 15);
  TrainConfig config;
  config.max_epochs = 2;
  config.min_epochs_before_stop = 0;
  config.batch_size = 32;
  config.seed = 16;
  const auto a =
      atl_transfer(source, "b", kApplB, train_batch, val_batch, config);
  const auto b =
      atl_transfer(source, "b", kApplB, train_batch, val_batch, config);
  for (std::size_t i = 0; i < a.model.params.size(); ++i)
    EXPECT_EQ(a.model.params[i].weight.data, b.model.params[i].weight.data);
}

TEST(Atl, FrozenConvGradientsAreCheaperThanFull) {
  // Same workload with and without the conv stack frozen; skipping the conv
  // backward pass must win on wall clock.
  const auto model = small_model(17);
  auto frozen = freeze(model, FreezeSelector::conv_stack());
  const auto batch = random_batch(512, 21, 18);

  auto time_once = [&](const Seq2PointModel& m) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = compute_gradients<float>(m.specs, m.params, batch.inputs,
                                      batch.targets);
    const auto t1 = std::chrono::steady_clock::now();
    volatile float sink = r.loss;
    (void)sink;
    return std::chrono::duration<double>(t1 - t0).count();
  };

  double full_time = 1e9, frozen_time = 1e9;
  for (int rep = 0; rep < 5; ++rep) {
    full_time = std::min(full_time, time_once(model));
    frozen_time = std::min(frozen_time, time_once(frozen));
  }
  EXPECT_LT(frozen_time, full_time);
}

TEST(Ctl, DirectApplicationEqualsPredict) {
  testutil::TempDir dir("ctl");
  const auto source = small_model(19);
  save_checkpoint(source, dir.path() / "src");
  const auto loaded = load_checkpoint(dir.path() / "src");

  PowerSeries mains;
  Rng rng(20);
  for (int i = 0; i < 300; ++i) {
    mains.timestamps.push_back(i * 8);
    mains.values.push_back(rng.uniform() * 2500.0);
  }
  mains.period_s = 8;

  const auto a = ctl_apply(loaded, mains);
  const auto b = predict(loaded, mains);
  EXPECT_EQ(a.values, b.values);
}

TEST(Ctl, PeriodMismatchIsPlanError) {
  const auto source = small_model(21);
  PowerSeries mains;
  mains.timestamps = {0, 6, 12};
  mains.values = {1, 2, 3};
  mains.period_s = 6;
  EXPECT_THROW(ctl_apply(source, mains), PlanError);
}

TEST(Ctl, DirectApplicationDoesNotMutateSource) {
  testutil::TempDir dir("ctl");
  const auto source = small_model(22);
  save_checkpoint(source, dir.path() / "src");
  const auto before =
      testutil::read_file(dir.path() / "src" / "layer_0.bin");

  const auto loaded = load_checkpoint(dir.path() / "src");
  const auto params_before = loaded.params;
  PowerSeries mains;
  for (int i = 0; i < 100; ++i) {
    mains.timestamps.push_back(i * 8);
    mains.values.push_back(500.0);
  }
  mains.period_s = 8;
  (void)ctl_apply(loaded, mains);

  EXPECT_EQ(testutil::read_file(dir.path() / "src" / "layer_0.bin"), before);
  for (std::size_t i = 0; i < loaded.params.size(); ++i)
    EXPECT_EQ(loaded.params[i].weight.data, params_before[i].weight.data);
}

TEST(CtlFinetune, ZeroLearningRateReturnsSourceModel) {
  const auto source = small_model(23);

  SyntheticConfig synth;
  synth.length = 400;
  synth.seed = 24;
  synth.appliances.push_back({"appliance_a", {{900.0, 240.0}}, 0.3});
  const auto hh = synthesize_household(synth);

  TrainConfig config;
  config.max_epochs = 2;
  config.min_epochs_before_stop = 0;
  config.patience = 5;
  config.batch_size = 512;  // one mini-batch
  config.learning_rate = 0.0f;

  const auto result = ctl_finetune(source, {pair_from(hh)}, 1.0, config);
  for (std::size_t i = 0; i < source.params.size(); ++i) {
    EXPECT_EQ(result.model.params[i].weight.data,
              source.params[i].weight.data);
    EXPECT_EQ(result.model.params[i].bias.data, source.params[i].bias.data);
  }
}

TEST(CtlFinetune, ConvFrozenDenseStartsFromSource) {
  const auto source = small_model(25);

  SyntheticConfig synth;
  synth.length = 1200;
  synth.seed = 26;
  synth.noise_sigma_watts = 20.0;
  synth.appliances.push_back({"appliance_a", {{900.0, 240.0}}, 0.3});
  const auto hh = synthesize_household(synth);

  TrainConfig config;
  config.max_epochs = 3;
  config.min_epochs_before_stop = 0;
  config.batch_size = 64;

  const auto result = ctl_finetune(source, {pair_from(hh)}, 0.5, config);
  for (std::size_t i : conv_indices(source))
    EXPECT_EQ(result.model.params[i].weight.data,
              source.params[i].weight.data);
  // Dense head moved (trained with a nonzero learning rate).
  std::size_t dense_idx = 0;
  for (std::size_t i = 0; i < source.specs.size(); ++i)
    if (source.specs[i].kind == LayerKind::dense) dense_idx = i;
  EXPECT_NE(result.model.params[dense_idx].weight.data,
            source.params[dense_idx].weight.data);
}

TEST(CtlFinetune, FractionValidation) {
  const auto source = small_model(27);
  SyntheticConfig synth;
  synth.length = 100;
  synth.appliances.push_back({"appliance_a", {{900.0, 240.0}}, 0.3});
  const auto hh = synthesize_household(synth);
  EXPECT_THROW(ctl_finetune(source, {pair_from(hh)}, 0.0, TrainConfig{}),
               PlanError);
  EXPECT_THROW(ctl_finetune(source, {pair_from(hh)}, 1.5, TrainConfig{}),
               PlanError);
  EXPECT_THROW(ctl_finetune(source, {}, 0.5, TrainConfig{}), DataError);
}

TEST(CutFraction, LeadingSamplesAcrossSegments) {
  AlignedPair a, b;
  for (int i = 0; i < 10; ++i) {
    a.mains.timestamps.push_back(i * 8);
    a.mains.values.push_back(i);
    a.appliance.timestamps.push_back(i * 8);
    a.appliance.values.push_back(i);
  }
  for (int i = 0; i < 6; ++i) {
    b.mains.timestamps.push_back(1000 + i * 8);
    b.mains.values.push_back(100 + i);
    b.appliance.timestamps.push_back(1000 + i * 8);
    b.appliance.values.push_back(100 + i);
  }
  // 25% of 16 samples = 4: all from the first segment.
  const auto cut = cut_fraction({a, b}, 0.25);
  ASSERT_EQ(cut.size(), 1u);
  EXPECT_EQ(cut[0].mains.size(), 4u);
  // 75% of 16 = 12: ten from the first segment, two from the second.
  const auto cut2 = cut_fraction({a, b}, 0.75);
  ASSERT_EQ(cut2.size(), 2u);
  EXPECT_EQ(cut2[0].mains.size(), 10u);
  EXPECT_EQ(cut2[1].mains.size(), 2u);
}
