#include <gtest/gtest.h>

#include "nilm/network.hpp"
#include "nilm/random.hpp"
#include "testutil.hpp"

using namespace nilm;

namespace {

struct RandomNet {
  std::vector<LayerSpec> specs;
  ParamSet<double> params;
  Tensor<double> inputs;
  std::vector<double> targets;
};

// Two conv layers plus a dense output over a small random window batch.
// Configurations whose ReLU inputs sit near zero are redrawn: there the
// loss is not differentiable and finite differences stop being an oracle.
RandomNet make_random_net(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(substream_seed(seed, attempt));
    const std::size_t W = 9 + 2 * rng.bounded(12);  // 9..31
    const std::size_t c1 = 2 + rng.bounded(3);
    const std::size_t k1 = 2 + rng.bounded(4);
    const std::size_t c2 = 2 + rng.bounded(3);
    const std::size_t k2 = 2 + rng.bounded(4);
    const std::size_t B = 1 + rng.bounded(8);

    RandomNet net;
    net.specs = {LayerSpec::conv1d(c1, k1), LayerSpec::relu(),
                 LayerSpec::conv1d(c2, k2), LayerSpec::relu(),
                 LayerSpec::flatten(),      LayerSpec::dense(1)};
    net.params = init_params<double>(net.specs, W, seed);
    for (auto& p : net.params)
      for (auto& b : p.bias.data) b = rng.normal() * 0.1;
    net.inputs = Tensor<double>({B, W});
    for (auto& v : net.inputs.data) v = rng.normal();
    net.targets.resize(B);
    for (auto& t : net.targets) t = rng.normal();

    if (testutil::min_relu_input_magnitude(net.specs, net.params,
                                           net.inputs) > 1e-2)
      return net;
  }
}

}  // namespace

TEST(Gradients, MatchFiniteDifferencesOnRandomNets) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto net = make_random_net(seed);
    const auto analytic =
        compute_gradients<double>(net.specs, net.params, net.inputs,
                                  net.targets);
    const auto numeric = testutil::numeric_gradients<double>(
        net.specs, net.params, net.inputs, net.targets, 1e-4);
    for (std::size_t li = 0; li < net.params.size(); ++li) {
      for (std::size_t i = 0; i < numeric[li].weight.size(); ++i)
        EXPECT_LT(testutil::relative_error(analytic.gradients[li].weight[i],
                                           numeric[li].weight[i]),
                  1e-4)
            << "seed " << seed << " layer " << li << " w[" << i << "]";
      for (std::size_t i = 0; i < numeric[li].bias.size(); ++i)
        EXPECT_LT(testutil::relative_error(analytic.gradients[li].bias[i],
                                           numeric[li].bias[i]),
                  1e-4)
            << "seed " << seed << " layer " << li << " b[" << i << "]";
    }
  }
}

TEST(Gradients, ZeroAtExactMinimumOfLinearNet) {
  // Linear net (no relu); targets equal to the current predictions put the
  // loss at a stationary point, so every gradient entry is exactly zero.
  const std::vector<LayerSpec> specs = {
      LayerSpec::conv1d(2, 3), LayerSpec::flatten(), LayerSpec::dense(1)};
  const auto params = init_params<double>(specs, 11, 4);
  Rng rng(5);
  Tensor<double> inputs({4, 11});
  for (auto& v : inputs.data) v = rng.normal();
  const auto targets = forward_predictions(specs, params, inputs);

  const auto result =
      compute_gradients<double>(specs, params, inputs, targets);
  EXPECT_EQ(result.loss, 0.0);
  for (const auto& g : result.gradients) {
    for (double v : g.weight.data) EXPECT_EQ(v, 0.0);
    for (double v : g.bias.data) EXPECT_EQ(v, 0.0);
  }
}

TEST(Gradients, FrozenLayerGetsZeroGradients) {
  auto net = make_random_net(12);
  net.specs[0].trainable = false;
  const auto result =
      compute_gradients<double>(net.specs, net.params, net.inputs,
                                net.targets);
  for (double v : result.gradients[0].weight.data) EXPECT_EQ(v, 0.0);
  for (double v : result.gradients[0].bias.data) EXPECT_EQ(v, 0.0);
  // The dense head still learns.
  double dense_norm = 0.0;
  for (double v : result.gradients[5].weight.data) dense_norm += v * v;
  EXPECT_GT(dense_norm, 0.0);
}

TEST(Gradients, FrozenPrefixMatchesUnfrozenForTrainableLayers) {
  auto net = make_random_net(23);
  const auto full =
      compute_gradients<double>(net.specs, net.params, net.inputs,
                                net.targets);
  auto frozen_specs = net.specs;
  frozen_specs[0].trainable = false;
  frozen_specs[2].trainable = false;
  const auto frozen = compute_gradients<double>(frozen_specs, net.params,
                                                net.inputs, net.targets);
  EXPECT_EQ(frozen.gradients[5].weight.data, full.gradients[5].weight.data);
  EXPECT_EQ(frozen.gradients[5].bias.data, full.gradients[5].bias.data);
}

TEST(Gradients, ShardingDoesNotChangeResults) {
  // A batch larger than one shard exercises the ordered reduction.
  Rng rng(31);
  const std::vector<LayerSpec> specs = {
      LayerSpec::conv1d(3, 3), LayerSpec::relu(), LayerSpec::flatten(),
      LayerSpec::dense(1)};
  const auto params = init_params<double>(specs, 15, 9);
  Tensor<double> inputs({300, 15});
  for (auto& v : inputs.data) v = rng.normal();
  std::vector<double> targets(300);
  for (auto& t : targets) t = rng.normal();

  const auto a = compute_gradients<double>(specs, params, inputs, targets);
  const auto b = compute_gradients<double>(specs, params, inputs, targets);
  for (std::size_t li = 0; li < a.gradients.size(); ++li) {
    EXPECT_EQ(a.gradients[li].weight.data, b.gradients[li].weight.data);
    EXPECT_EQ(a.gradients[li].bias.data, b.gradients[li].bias.data);
  }
  EXPECT_EQ(a.loss, b.loss);
}

TEST(Gradients, BatchLossMatchesMse) {
  auto net = make_random_net(44);
  const auto result =
      compute_gradients<double>(net.specs, net.params, net.inputs,
                                net.targets);
  const auto preds =
      forward_predictions(net.specs, net.params, net.inputs);
  EXPECT_NEAR(result.loss,
              mse_loss(std::span<const double>(preds),
                       std::span<const double>(net.targets)),
              1e-12);
}
