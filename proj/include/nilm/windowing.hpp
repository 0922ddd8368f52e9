#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/power_series.hpp"
#include "nilm/tensor.hpp"

namespace nilm {

// Fixed per-channel normalization constants: x -> (x - mean) / std.
struct NormalizationParams {
  double mean = 0.0;
  double std = 1.0;
};

inline void validate(const NormalizationParams& p, const char* who) {
  if (!(p.std > 0.0))
    throw SpecError(std::string(who) + ": normalization std must be > 0");
}

// Shipped defaults. "aggregate" is the mains channel; "mains" is accepted as
// an alias and underscores match spaces so CSV-friendly names resolve too.
inline const std::map<std::string, NormalizationParams>&
default_normalization() {
  static const std::map<std::string, NormalizationParams> table = {
      {"aggregate", {522.0, 814.0}},        {"kettle", {700.0, 1000.0}},
      {"microwave", {500.0, 800.0}},        {"fridge", {200.0, 400.0}},
      {"dishwasher", {700.0, 1000.0}},      {"washing machine", {400.0, 700.0}},
  };
  return table;
}

inline std::string canonical_channel_name(std::string name) {
  for (char& c : name) {
    if (c == '_') c = ' ';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (name == "mains") return "aggregate";
  if (name == "dish washer") return "dishwasher";
  return name;
}

inline std::vector<double> normalize(std::span<const double> values,
                                     const NormalizationParams& params) {
  validate(params, "normalize");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = (values[i] - params.mean) / params.std;
  return out;
}

inline std::vector<double> normalize(const PowerSeries& series,
                                     const NormalizationParams& params) {
  return normalize(std::span<const double>(series.values), params);
}

inline std::vector<float> to_float(std::span<const double> values) {
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<float>(values[i]);
  return out;
}

// Normalized values in the 32-bit precision the network consumes.
inline std::vector<float> normalize_f(const PowerSeries& series,
                                      const NormalizationParams& params) {
  return to_float(normalize(series, params));
}

namespace detail {

template <typename T>
std::vector<double> denormalize_impl(std::span<const T> values,
                                     const NormalizationParams& params,
                                     bool clamp) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double w = static_cast<double>(values[i]) * params.std + params.mean;
    if (clamp && w < 0.0) w = 0.0;
    out[i] = w;
  }
  return out;
}

}  // namespace detail

// Inverse of normalize. With `clamp` set, negative watt values are replaced
// by zero; reports use clamped output, loss computation does not.
inline std::vector<double> denormalize(std::span<const double> values,
                                       const NormalizationParams& params,
                                       bool clamp) {
  return detail::denormalize_impl(values, params, clamp);
}

inline std::vector<double> denormalize(std::span<const float> values,
                                       const NormalizationParams& params,
                                       bool clamp) {
  return detail::denormalize_impl(values, params, clamp);
}

// Sliding windows over a normalized sequence, one window per input sample.
// The sequence is padded with floor(W/2) zeros in front, and as many zeros
// at the back as needed for the count to come out at exactly T (floor(W/2)
// for odd W, one fewer for even W). Window t's midpoint element, index
// floor(W/2), is the original sample t.
inline Tensor<float> pad_and_window(std::span<const float> sequence,
                                    std::size_t window_length) {
  const std::size_t T = sequence.size();
  const std::size_t W = window_length;
  if (T < 1) throw EmptyInputError("pad_and_window: empty sequence");
  if (W < 1) throw SpecError("pad_and_window: window length must be >= 1");

  const std::size_t pad_front = W / 2;
  Tensor<float> out({T, W});
  for (std::size_t t = 0; t < T; ++t) {
    float* row = out.ptr() + t * W;
    for (std::size_t k = 0; k < W; ++k) {
      // Window t covers padded indices [t, t+W); padded index i maps to
      // original index i - pad_front.
      const std::ptrdiff_t src =
          static_cast<std::ptrdiff_t>(t + k) -
          static_cast<std::ptrdiff_t>(pad_front);
      row[k] = (src >= 0 && src < static_cast<std::ptrdiff_t>(T))
                   ? sequence[static_cast<std::size_t>(src)]
                   : 0.0f;
    }
  }
  return out;
}

// Normalized mains windows paired with normalized appliance midpoint
// targets. inputs is [n_windows x W]; targets has one entry per window.
struct WindowBatch {
  Tensor<float> inputs;
  std::vector<float> targets;

  std::size_t size() const { return targets.size(); }
  std::size_t window_length() const {
    return inputs.rank() == 2 ? inputs.extent(1) : 0;
  }
};

inline WindowBatch make_training_pairs(const AlignedPair& pair,
                                       std::size_t window_length,
                                       const NormalizationParams& mains_params,
                                       const NormalizationParams& appliance_params) {
  WindowBatch batch;
  const auto mains_norm = normalize_f(pair.mains, mains_params);
  batch.inputs = pad_and_window(mains_norm, window_length);
  batch.targets = to_float(normalize(pair.appliance, appliance_params));
  return batch;
}

inline WindowBatch merge_batches(std::vector<WindowBatch> parts) {
  WindowBatch merged;
  std::size_t total = 0;
  std::size_t W = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    if (W == 0) W = p.window_length();
    if (p.window_length() != W)
      throw ShapeError("merge_batches: mismatched window lengths");
    total += p.size();
  }
  if (total == 0) throw EmptyInputError("merge_batches: no windows");
  merged.inputs = Tensor<float>({total, W});
  merged.targets.reserve(total);
  std::size_t row = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    std::copy(p.inputs.data.begin(), p.inputs.data.end(),
              merged.inputs.data.begin() + row * W);
    merged.targets.insert(merged.targets.end(), p.targets.begin(),
                          p.targets.end());
    row += p.size();
  }
  return merged;
}

}  // namespace nilm
