#pragma once

#include <cmath>
#include <cstdint>

#include "nilm/layers.hpp"

namespace nilm {

// Adam with bias correction. Defaults: learning rate 0.001, beta1 0.9,
// beta2 0.999, epsilon 1e-8.
template <typename T>
struct AdamState {
  std::uint64_t t = 0;
  T learning_rate = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  ParamSet<T> m;
  ParamSet<T> v;

  static AdamState for_params(const ParamSet<T>& params,
                              T learning_rate = T(0.001), T beta1 = T(0.9),
                              T beta2 = T(0.999), T epsilon = T(1e-8)) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
  }
};

namespace detail {

template <typename T>
void adam_update_array(T* p, const T* g, T* m, T* v, std::size_t n,
                       const AdamState<T>& s, T bias1, T bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (T(1) - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (T(1) - s.beta2) * g[i] * g[i];
    const T m_hat = m[i] / bias1;
    const T v_hat = v[i] / bias2;
    p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace detail

// One optimizer step. Zero gradient entries (frozen layers) leave their
// parameters bit-identical.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads,
               AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state size mismatch");
  state.t += 1;
  const T bias1 = T(1) - static_cast<T>(std::pow(
                             static_cast<double>(state.beta1),
                             static_cast<double>(state.t)));
  const T bias2 = T(1) - static_cast<T>(std::pow(
                             static_cast<double>(state.beta2),
                             static_cast<double>(state.t)));
  for (std::size_t li = 0; li < params.size(); ++li) {
    if (params[li].empty()) continue;
    if (!params[li].weight.same_shape(grads[li].weight) ||
        !params[li].bias.same_shape(grads[li].bias))
      throw ShapeError("adam_step: gradient shape mismatch at layer " +
                       std::to_string(li));
    detail::adam_update_array(params[li].weight.ptr(),
                              grads[li].weight.ptr(),
                              state.m[li].weight.ptr(),
                              state.v[li].weight.ptr(),
                              params[li].weight.size(), state, bias1, bias2);
    detail::adam_update_array(params[li].bias.ptr(), grads[li].bias.ptr(),
                              state.m[li].bias.ptr(),
                              state.v[li].bias.ptr(), params[li].bias.size(),
                              state, bias1, bias2);
  }
}

}  // namespace nilm
