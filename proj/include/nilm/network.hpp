#pragma once

#include <atomic>
#include <span>
#include <thread>
#include <vector>

#include "nilm/layers.hpp"
#include "nilm/tensor.hpp"

namespace nilm {

template <typename T>
T mse_loss(std::span<const T> predictions, std::span<const T> targets) {
  if (predictions.size() != targets.size())
    throw ShapeError("mse_loss: length mismatch");
  if (predictions.empty()) throw ShapeError("mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = static_cast<double>(predictions[i]) -
                     static_cast<double>(targets[i]);
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(predictions.size()));
}

template <typename T>
T mse_loss(const Tensor<T>& predictions, const Tensor<T>& targets) {
  return mse_loss(std::span<const T>(predictions.data),
                  std::span<const T>(targets.data));
}

namespace detail {

// Batched tensor shape for a per-sample DataShape.
inline std::vector<std::size_t> batched_shape(std::size_t B,
                                              const DataShape& s) {
  if (s.flat) return {B, s.len};
  return {B, s.len, s.ch};
}

template <typename T>
Tensor<T> layer_forward_batch(const LayerSpec& spec, const LayerParams<T>& p,
                              const Tensor<T>& in, const DataShape& in_shape,
                              const DataShape& out_shape) {
  const std::size_t B = in.extent(0);
  switch (spec.kind) {
    case LayerKind::conv1d: {
      Tensor<T> out(batched_shape(B, out_shape));
      kernels::conv1d_forward(in.ptr(), B, in_shape.len, in_shape.ch,
                              p.weight.ptr(), p.bias.ptr(), spec.kernel_length,
                              spec.filters, spec.padding, out.ptr(),
                              out_shape.len);
      return out;
    }
    case LayerKind::dense: {
      Tensor<T> out(batched_shape(B, out_shape));
      kernels::dense_forward(in.ptr(), B, in_shape.width(), p.weight.ptr(),
                             p.bias.ptr(), spec.units, out.ptr());
      return out;
    }
    case LayerKind::relu: {
      Tensor<T> out(in.shape);
      kernels::relu_forward(in.ptr(), in.size(), out.ptr());
      return out;
    }
    case LayerKind::flatten:
      return in.reshaped(batched_shape(B, out_shape));
  }
  throw SpecError("unknown layer kind");
}

}  // namespace detail

// Forward pass over a batch of windows. `inputs` is [B x L] for a
// single-channel front or already [B x L x C]. Returns activations at every
// layer boundary; activations[0] is the (reshaped) input.
template <typename T>
std::vector<Tensor<T>> forward_activations(const std::vector<LayerSpec>& specs,
                                           const ParamSet<T>& params,
                                           const Tensor<T>& inputs) {
  if (inputs.rank() < 2) throw ShapeError("forward: want a batched input");
  const std::size_t B = inputs.extent(0);
  const std::size_t L = inputs.extent(1);
  const std::size_t C = inputs.rank() == 3 ? inputs.extent(2) : 1;
  validate_params(specs, params, L, C);
  const auto shapes = propagate_shapes(specs, L, C);

  std::vector<Tensor<T>> acts;
  acts.reserve(specs.size() + 1);
  acts.push_back(inputs.rank() == 2 ? inputs.reshaped({B, L, 1}) : inputs);
  for (std::size_t i = 0; i < specs.size(); ++i)
    acts.push_back(detail::layer_forward_batch(specs[i], params[i],
                                               acts.back(), shapes[i],
                                               shapes[i + 1]));
  return acts;
}

// Scalar network output per window; the stack must end in width 1.
template <typename T>
std::vector<T> forward_predictions(const std::vector<LayerSpec>& specs,
                                   const ParamSet<T>& params,
                                   const Tensor<T>& inputs) {
  const auto acts = forward_activations(specs, params, inputs);
  const Tensor<T>& out = acts.back();
  const std::size_t B = inputs.extent(0);
  if (out.size() != B)
    throw ShapeError("network output is not scalar per window");
  return out.data;
}

// Resume the forward pass from the activation feeding layer `start`.
// Used to run a dense head on externally extracted feature maps.
template <typename T>
std::vector<T> forward_from(const std::vector<LayerSpec>& specs,
                            const ParamSet<T>& params,
                            const Tensor<T>& activation, std::size_t start,
                            std::size_t input_length,
                            std::size_t input_channels = 1) {
  const auto shapes = propagate_shapes(specs, input_length, input_channels);
  Tensor<T> cur = activation;
  for (std::size_t i = start; i < specs.size(); ++i)
    cur = detail::layer_forward_batch(specs[i], params[i], cur, shapes[i],
                                      shapes[i + 1]);
  if (cur.size() != activation.extent(0))
    throw ShapeError("network output is not scalar per window");
  return cur.data;
}

template <typename T>
struct GradientResult {
  ParamSet<T> gradients;
  T loss = T(0);
  std::vector<T> predictions;  // per window, in batch order
};

namespace detail {

// Backward through one layer. `g` holds dL/d(output); returns dL/d(input)
// unless `need_input_grad` is false. Weight gradients accumulate into
// `grads` when the layer is trainable.
template <typename T>
Tensor<T> layer_backward_batch(const LayerSpec& spec, const LayerParams<T>& p,
                               LayerParams<T>* grads, const Tensor<T>& in,
                               const DataShape& in_shape, const Tensor<T>& g,
                               const DataShape& out_shape,
                               bool need_input_grad) {
  const std::size_t B = in.extent(0);
  Tensor<T> d_in;
  if (need_input_grad) d_in = Tensor<T>(in.shape);
  switch (spec.kind) {
    case LayerKind::conv1d:
      kernels::conv1d_backward(in.ptr(), B, in_shape.len, in_shape.ch,
                               p.weight.ptr(), spec.kernel_length,
                               spec.filters, spec.padding, g.ptr(),
                               out_shape.len,
                               need_input_grad ? d_in.ptr() : nullptr,
                               grads ? grads->weight.ptr() : nullptr,
                               grads ? grads->bias.ptr() : nullptr);
      break;
    case LayerKind::dense:
      kernels::dense_backward(in.ptr(), B, in_shape.width(), p.weight.ptr(),
                              spec.units, g.ptr(),
                              need_input_grad ? d_in.ptr() : nullptr,
                              grads ? grads->weight.ptr() : nullptr,
                              grads ? grads->bias.ptr() : nullptr);
      break;
    case LayerKind::relu:
      if (need_input_grad)
        kernels::relu_backward(in.ptr(), in.size(), g.ptr(), d_in.ptr());
      break;
    case LayerKind::flatten:
      if (need_input_grad) d_in = g.reshaped(in.shape);
      break;
  }
  return d_in;
}

template <typename T>
struct ShardResult {
  ParamSet<T> grads;
  double sq_error_sum = 0.0;
  std::vector<T> predictions;
};

// Gradients of the batch-mean squared error for the windows [begin, end).
// `inv_batch` is 1/B of the full batch so shard results sum to the batch
// gradient.
template <typename T>
ShardResult<T> gradient_shard(const std::vector<LayerSpec>& specs,
                              const ParamSet<T>& params,
                              const Tensor<T>& inputs,
                              std::span<const T> targets, std::size_t begin,
                              std::size_t end, T inv_batch,
                              std::size_t lowest_trainable) {
  const std::size_t W = inputs.extent(1);
  const std::size_t Bs = end - begin;
  Tensor<T> shard_in({Bs, W});
  std::copy(inputs.data.begin() + begin * W, inputs.data.begin() + end * W,
            shard_in.data.begin());

  const auto shapes = propagate_shapes(specs, W, 1);
  auto acts = forward_activations(specs, params, shard_in);

  ShardResult<T> result;
  result.grads = zeros_like(params);

  // dL/dpred for L = (1/B) sum (pred - target)^2.
  Tensor<T> g(acts.back().shape);
  double sq = 0.0;
  result.predictions.assign(acts.back().data.begin(), acts.back().data.end());
  for (std::size_t i = 0; i < Bs; ++i) {
    const double d = static_cast<double>(acts.back()[i]) -
                     static_cast<double>(targets[begin + i]);
    sq += d * d;
    g[i] = static_cast<T>(2) * static_cast<T>(d) * inv_batch;
  }
  result.sq_error_sum = sq;

  for (std::size_t li = specs.size(); li-- > lowest_trainable;) {
    const bool want_params = specs[li].trainable && specs[li].has_params();
    const bool need_input_grad = li > lowest_trainable;
    g = layer_backward_batch(specs[li], params[li],
                             want_params ? &result.grads[li] : nullptr,
                             acts[li], shapes[li], g, shapes[li + 1],
                             need_input_grad);
  }
  return result;
}

}  // namespace detail

// Reverse-mode gradients of the mean squared error over a batch of windows,
// with respect to every trainable parameter. Non-trainable layers get zero
// gradients, and the backward sweep stops below the deepest trainable layer
// (a frozen conv stack costs no backward convolutions).
//
// Work is split into fixed-size shards; shard results are reduced in index
// order, so the result does not depend on thread count or scheduling.
template <typename T>
GradientResult<T> compute_gradients(const std::vector<LayerSpec>& specs,
                                    const ParamSet<T>& params,
                                    const Tensor<T>& inputs,
                                    std::span<const T> targets) {
  if (inputs.rank() != 2) throw ShapeError("compute_gradients: want [B x W]");
  const std::size_t B = inputs.extent(0);
  if (B == 0) throw DataError("compute_gradients: empty batch");
  if (targets.size() != B)
    throw ShapeError("compute_gradients: target count mismatch");

  std::size_t lowest_trainable = specs.size();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].trainable && specs[i].has_params()) {
      lowest_trainable = i;
      break;
    }
  }

  GradientResult<T> result;
  result.gradients = zeros_like(params);
  if (lowest_trainable == specs.size()) {
    // Nothing trainable: gradients are all zero, still report the loss.
    result.predictions = forward_predictions(specs, params, inputs);
    result.loss =
        mse_loss(std::span<const T>(result.predictions), targets);
    return result;
  }

  constexpr std::size_t kShard = 128;
  const std::size_t n_shards = (B + kShard - 1) / kShard;
  const T inv_batch = static_cast<T>(1) / static_cast<T>(B);

  std::vector<detail::ShardResult<T>> shard_results(n_shards);
  auto run_shard = [&](std::size_t s) {
    const std::size_t begin = s * kShard;
    const std::size_t end = std::min(begin + kShard, B);
    shard_results[s] = detail::gradient_shard(specs, params, inputs, targets,
                                              begin, end, inv_batch,
                                              lowest_trainable);
  };

  const std::size_t hw = std::thread::hardware_concurrency();
  const std::size_t n_workers = std::min<std::size_t>(hw ? hw : 1, n_shards);
  if (n_workers <= 1) {
    for (std::size_t s = 0; s < n_shards; ++s) run_shard(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t wi = 0; wi < n_workers; ++wi) {
      workers.emplace_back([&] {
        for (std::size_t s = next.fetch_add(1); s < n_shards;
             s = next.fetch_add(1))
          run_shard(s);
      });
    }
    for (auto& w : workers) w.join();
  }

  double sq = 0.0;
  result.predictions.reserve(B);
  for (std::size_t s = 0; s < n_shards; ++s) {
    sq += shard_results[s].sq_error_sum;
    result.predictions.insert(result.predictions.end(),
                              shard_results[s].predictions.begin(),
                              shard_results[s].predictions.end());
    for (std::size_t li = 0; li < params.size(); ++li) {
      if (shard_results[s].grads[li].empty()) continue;
      auto& dst = result.gradients[li];
      const auto& src = shard_results[s].grads[li];
      for (std::size_t i = 0; i < dst.weight.size(); ++i)
        dst.weight[i] += src.weight[i];
      for (std::size_t i = 0; i < dst.bias.size(); ++i)
        dst.bias[i] += src.bias[i];
    }
  }
  result.loss = static_cast<T>(sq / static_cast<double>(B));
  return result;
}

}  // namespace nilm
