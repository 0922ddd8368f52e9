#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nilm/network.hpp"
#include "nilm/power_series.hpp"
#include "nilm/windowing.hpp"

namespace nilm {

// A sequence-to-point regressor: a window of normalized mains in, the
// normalized appliance power at the window midpoint out.
struct Seq2PointModel {
  std::vector<LayerSpec> specs;
  ParamSet<float> params;
  std::size_t window_length = 599;
  std::int64_t period_s = 8;
  NormalizationParams mains_norm;
  NormalizationParams appliance_norm;
  std::string appliance;
};

// The canonical five-conv stack: conv 30x10, 30x8, 40x6, 50x5, 50x5 (stride
// 1, same padding, ReLU after each), flatten, dense 1024 + ReLU, dense 1.
inline std::vector<LayerSpec> default_architecture() {
  std::vector<LayerSpec> specs;
  const std::size_t filters[] = {30, 30, 40, 50, 50};
  const std::size_t kernels[] = {10, 8, 6, 5, 5};
  for (int i = 0; i < 5; ++i) {
    specs.push_back(LayerSpec::conv1d(filters[i], kernels[i]));
    specs.push_back(LayerSpec::relu());
  }
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::dense(1024));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::dense(1));
  return specs;
}

// Small stack for experiments and tests: conv(f0 x k0), conv(f1 x k1),
// dense(h), dense(1), with ReLU between.
inline std::vector<LayerSpec> reduced_architecture(std::size_t f0,
                                                   std::size_t k0,
                                                   std::size_t f1,
                                                   std::size_t k1,
                                                   std::size_t hidden) {
  std::vector<LayerSpec> specs;
  specs.push_back(LayerSpec::conv1d(f0, k0));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::conv1d(f1, k1));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::dense(hidden));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::dense(1));
  return specs;
}

// Validate the architecture against the window length and initialize
// parameters (seeded, all layers trainable). A flatten layer is inserted
// before the first dense layer if the list omits it.
inline Seq2PointModel build_model(std::size_t window_length,
                                  const NormalizationParams& mains_params,
                                  const NormalizationParams& appliance_params,
                                  const std::string& appliance_label,
                                  std::vector<LayerSpec> arch,
                                  std::uint64_t seed = 0,
                                  std::int64_t period_s = 8) {
  if (window_length < 1) throw SpecError("build_model: window length >= 1");
  if (arch.empty()) throw SpecError("build_model: empty architecture");
  validate(mains_params, "build_model");
  validate(appliance_params, "build_model");

  // Insert flatten where a dense layer would otherwise see conv-shaped data.
  std::vector<LayerSpec> specs;
  DataShape shape{window_length, 1, false};
  for (const auto& s : arch) {
    if (s.kind == LayerKind::dense && !shape.flat) {
      specs.push_back(LayerSpec::flatten());
      shape = propagate_shape(specs.back(), shape);
    }
    specs.push_back(s);
    shape = propagate_shape(s, shape);
  }
  if (!(shape.flat && shape.len == 1))
    throw SpecError("build_model: final layer width must be 1, got " +
                    std::to_string(shape.width()));
  for (auto& s : specs) s.trainable = true;

  Seq2PointModel model;
  model.specs = std::move(specs);
  model.params = init_params<float>(model.specs, window_length, seed);
  model.window_length = window_length;
  model.period_s = period_s;
  model.mains_norm = mains_params;
  model.appliance_norm = appliance_params;
  model.appliance = appliance_label;
  return model;
}

inline Seq2PointModel build_model(std::size_t window_length,
                                  const NormalizationParams& mains_params,
                                  const NormalizationParams& appliance_params,
                                  const std::string& appliance_label,
                                  std::uint64_t seed = 0,
                                  std::int64_t period_s = 8) {
  return build_model(window_length, mains_params, appliance_params,
                     appliance_label, default_architecture(), seed, period_s);
}

inline std::size_t parameter_count(const Seq2PointModel& model) {
  std::size_t n = 0;
  for (const auto& p : model.params) n += p.count();
  return n;
}

// Normalized midpoint predictions for a batch of normalized windows,
// evaluated in fixed-size chunks to bound activation memory.
inline std::vector<float> predict_windows(const Seq2PointModel& model,
                                          const Tensor<float>& windows) {
  if (windows.rank() != 2 || windows.extent(1) != model.window_length)
    throw ShapeError("predict_windows: want [B x W] with the model's W");
  const std::size_t B = windows.extent(0);
  constexpr std::size_t kChunk = 2048;
  std::vector<float> out;
  out.reserve(B);
  const std::size_t W = model.window_length;
  for (std::size_t begin = 0; begin < B; begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, B);
    Tensor<float> chunk({end - begin, W});
    std::copy(windows.data.begin() + begin * W,
              windows.data.begin() + end * W, chunk.data.begin());
    const auto preds = forward_predictions(model.specs, model.params, chunk);
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

// Appliance power estimate for a mains series: one prediction per input
// sample, denormalized with clamping at 0 W. The series must be on the
// model's sampling grid.
inline PowerSeries predict(const Seq2PointModel& model,
                           const PowerSeries& mains, bool clamp = true) {
  if (mains.empty()) throw DataError("predict: empty mains series");
  const auto normalized = normalize_f(mains, model.mains_norm);
  const auto windows = pad_and_window(normalized, model.window_length);
  const auto preds = predict_windows(model, windows);
  PowerSeries out;
  out.timestamps = mains.timestamps;
  out.values = denormalize(preds, model.appliance_norm, clamp);
  out.period_s = mains.period_s;
  out.channel = model.appliance;
  return out;
}

// Index one past the final conv layer's activation (including the ReLU that
// follows it, when present).
inline std::size_t conv_stack_end(const Seq2PointModel& model) {
  std::size_t last_conv = model.specs.size();
  for (std::size_t i = 0; i < model.specs.size(); ++i)
    if (model.specs[i].kind == LayerKind::conv1d) last_conv = i;
  if (last_conv == model.specs.size())
    throw SpecError("model has no conv layers");
  std::size_t end = last_conv + 1;
  if (end < model.specs.size() && model.specs[end].kind == LayerKind::relu)
    ++end;
  return end;
}

// Post-activation feature maps of the final conv layer, [B x L x C_last].
inline Tensor<float> extract_features(const Seq2PointModel& model,
                                      const Tensor<float>& windows) {
  if (windows.rank() != 2 || windows.extent(1) != model.window_length)
    throw ShapeError("extract_features: want [B x W] with the model's W");
  const std::size_t end = conv_stack_end(model);
  std::vector<LayerSpec> prefix(model.specs.begin(),
                                model.specs.begin() + end);
  ParamSet<float> prefix_params(model.params.begin(),
                                model.params.begin() + end);
  auto acts = forward_activations(prefix, prefix_params, windows);
  return std::move(acts.back());
}

// Run the layers above the conv stack on extracted feature maps; equal to
// predict_windows on the windows the features came from.
inline std::vector<float> predict_from_features(const Seq2PointModel& model,
                                                const Tensor<float>& features) {
  const std::size_t end = conv_stack_end(model);
  return forward_from(model.specs, model.params, features, end,
                      model.window_length, 1);
}

}  // namespace nilm
