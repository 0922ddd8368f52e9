#pragma once

// Shared helpers for the test suites.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nilm/network.hpp"
#include "nilm/random.hpp"

namespace testutil {

// Central finite differences of the batch MSE with respect to every
// parameter entry. Independent of the backward pass: only the forward pass
// and the loss definition are reused.
template <typename T>
nilm::ParamSet<T> numeric_gradients(const std::vector<nilm::LayerSpec>& specs,
                                    nilm::ParamSet<T> params,
                                    const nilm::Tensor<T>& inputs,
                                    const std::vector<T>& targets, T h) {
  auto loss_at = [&]() {
    const auto preds = nilm::forward_predictions(specs, params, inputs);
    return nilm::mse_loss(std::span<const T>(preds),
                          std::span<const T>(targets));
  };
  nilm::ParamSet<T> grads = nilm::zeros_like(params);
  for (std::size_t li = 0; li < params.size(); ++li) {
    if (params[li].empty()) continue;
    auto diff_array = [&](nilm::Tensor<T>& arr, nilm::Tensor<T>& out) {
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const T saved = arr[i];
        arr[i] = saved + h;
        const T up = loss_at();
        arr[i] = saved - h;
        const T down = loss_at();
        arr[i] = saved;
        out[i] = (up - down) / (2 * h);
      }
    };
    diff_array(params[li].weight, grads[li].weight);
    diff_array(params[li].bias, grads[li].bias);
  }
  return grads;
}

// Relative error with the usual guard for near-zero entries.
inline double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1.0});
  return std::abs(a - b) / denom;
}

// Smallest |pre-activation| feeding any ReLU. Central differences are only
// a derivative oracle when no perturbation crosses a kink, so gradient
// checks reject configurations with pre-activations near zero.
template <typename T>
double min_relu_input_magnitude(const std::vector<nilm::LayerSpec>& specs,
                                const nilm::ParamSet<T>& params,
                                const nilm::Tensor<T>& inputs) {
  const auto acts = nilm::forward_activations(specs, params, inputs);
  double min_mag = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind != nilm::LayerKind::relu) continue;
    for (const T v : acts[i].data)
      min_mag = std::min(min_mag, std::abs(static_cast<double>(v)));
  }
  return min_mag;
}

// A unique scratch directory under the system temp dir, removed on
// destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    path_ = base / (tag + "-" + std::to_string(rd()) + "-" +
                    std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
