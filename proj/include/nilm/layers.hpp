#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/random.hpp"
#include "nilm/tensor.hpp"

namespace nilm {

enum class LayerKind { conv1d, dense, relu, flatten };
enum class Padding { same, valid };

// One layer of the closed layer set. Conv layers are stride-1; `trainable`
// is the freezing flag honored by gradient computation and the optimizer.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t filters = 0;        // conv1d
  std::size_t kernel_length = 0;  // conv1d
  Padding padding = Padding::same;
  std::size_t units = 0;          // dense
  bool trainable = true;

  static LayerSpec conv1d(std::size_t filters, std::size_t kernel_length,
                          Padding padding = Padding::same) {
    if (filters < 1 || kernel_length < 1)
      throw SpecError("conv1d: filters and kernel length must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::conv1d;
    s.filters = filters;
    s.kernel_length = kernel_length;
    s.padding = padding;
    return s;
  }
  static LayerSpec dense(std::size_t units) {
    if (units < 1) throw SpecError("dense: units must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    return s;
  }
  static LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }

  bool has_params() const {
    return kind == LayerKind::conv1d || kind == LayerKind::dense;
  }
};

// "conv1", "conv2", "dense1", ... per-kind ordinals in stack order.
inline std::vector<std::string> layer_names(const std::vector<LayerSpec>& specs) {
  std::vector<std::string> names;
  std::size_t n_conv = 0, n_dense = 0, n_relu = 0, n_flatten = 0;
  for (const auto& s : specs) {
    switch (s.kind) {
      case LayerKind::conv1d:
        names.push_back("conv" + std::to_string(++n_conv));
        break;
      case LayerKind::dense:
        names.push_back("dense" + std::to_string(++n_dense));
        break;
      case LayerKind::relu:
        names.push_back("relu" + std::to_string(++n_relu));
        break;
      case LayerKind::flatten:
        names.push_back("flatten" + std::to_string(++n_flatten));
        break;
    }
  }
  return names;
}

// Shape of one sample as it flows through the stack. Conv-domain data is
// [len x ch]; after flatten it is a flat vector of `len` entries (ch == 1).
struct DataShape {
  std::size_t len = 0;
  std::size_t ch = 1;
  bool flat = false;

  std::size_t width() const { return flat ? len : len * ch; }
  bool operator==(const DataShape&) const = default;
};

inline DataShape propagate_shape(const LayerSpec& spec, const DataShape& in) {
  switch (spec.kind) {
    case LayerKind::conv1d: {
      if (in.flat) throw SpecError("conv1d cannot follow flatten");
      std::size_t out_len = in.len;
      if (spec.padding == Padding::valid) {
        if (in.len < spec.kernel_length)
          throw SpecError("conv1d: input shorter than kernel");
        out_len = in.len - spec.kernel_length + 1;
      }
      return {out_len, spec.filters, false};
    }
    case LayerKind::dense: {
      if (!in.flat)
        throw SpecError("dense requires flattened input (insert flatten)");
      return {spec.units, 1, true};
    }
    case LayerKind::relu:
      return in;
    case LayerKind::flatten:
      return {in.width(), 1, true};
  }
  throw SpecError("unknown layer kind");
}

// Per-sample shapes for every layer boundary; index 0 is the input shape.
inline std::vector<DataShape> propagate_shapes(
    const std::vector<LayerSpec>& specs, std::size_t input_length,
    std::size_t input_channels = 1) {
  std::vector<DataShape> shapes;
  shapes.push_back({input_length, input_channels, false});
  for (const auto& s : specs) shapes.push_back(propagate_shape(s, shapes.back()));
  return shapes;
}

// Weight + bias for one layer; both empty for relu/flatten.
// conv1d weights are [kernel x in_ch x filters], dense weights are
// [in_width x units].
template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;

  bool empty() const { return weight.size() == 0; }
  std::size_t count() const { return weight.size() + bias.size(); }
};

template <typename T>
using ParamSet = std::vector<LayerParams<T>>;

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].empty()) continue;
    out[i].weight = Tensor<T>(params[i].weight.shape);
    out[i].bias = Tensor<T>(params[i].bias.shape);
  }
  return out;
}

// Seeded initialization: weights from N(0, 1/fan_in) (scale 1/sqrt(fan_in)),
// biases zero. Each layer draws from its own substream so re-initializing
// one layer does not disturb the others.
template <typename T>
LayerParams<T> init_layer(const LayerSpec& spec, const DataShape& in,
                          std::uint64_t seed, std::size_t layer_index) {
  LayerParams<T> p;
  if (!spec.has_params()) return p;
  Rng rng(substream_seed(seed, layer_index));
  if (spec.kind == LayerKind::conv1d) {
    p.weight = Tensor<T>({spec.kernel_length, in.ch, spec.filters});
    p.bias = Tensor<T>({spec.filters});
    const double scale =
        1.0 / std::sqrt(static_cast<double>(spec.kernel_length * in.ch));
    for (auto& w : p.weight.data) w = static_cast<T>(rng.normal() * scale);
  } else {
    const std::size_t in_width = in.width();
    p.weight = Tensor<T>({in_width, spec.units});
    p.bias = Tensor<T>({spec.units});
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_width));
    for (auto& w : p.weight.data) w = static_cast<T>(rng.normal() * scale);
  }
  return p;
}

template <typename T>
ParamSet<T> init_params(const std::vector<LayerSpec>& specs,
                        std::size_t input_length, std::uint64_t seed,
                        std::size_t input_channels = 1) {
  const auto shapes = propagate_shapes(specs, input_length, input_channels);
  ParamSet<T> params(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i)
    params[i] = init_layer<T>(specs[i], shapes[i], seed, i);
  return params;
}

template <typename T>
void validate_params(const std::vector<LayerSpec>& specs,
                     const ParamSet<T>& params, std::size_t input_length,
                     std::size_t input_channels = 1) {
  if (specs.size() != params.size())
    throw ShapeError("parameter set does not match layer list");
  const auto shapes = propagate_shapes(specs, input_length, input_channels);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const auto& p = params[i];
    if (!s.has_params()) {
      if (!p.empty()) throw ShapeError("parameters on a parameterless layer");
      continue;
    }
    std::vector<std::size_t> want_w, want_b;
    if (s.kind == LayerKind::conv1d) {
      want_w = {s.kernel_length, shapes[i].ch, s.filters};
      want_b = {s.filters};
    } else {
      want_w = {shapes[i].width(), s.units};
      want_b = {s.units};
    }
    if (p.weight.shape != want_w || p.bias.shape != want_b)
      throw ShapeError("layer " + std::to_string(i) +
                       " parameter shape mismatch");
  }
}

namespace kernels {

// out[b,l,co] = bias[co] + sum_{kk,ci} in[b, l+kk-pad_front, ci] * w[kk,ci,co]
// with an arbitrary front pad (the back pad is implied by Lo). Also the
// engine for the conv input-gradient, which is the same correlation with a
// flipped, transposed kernel.
//
// The interior (no padding in reach) is processed two output positions at a
// time: the pair shares every weight load and gives the FMA units two
// independent accumulation chains.
template <typename T>
void conv1d_correlate(const T* __restrict in, std::size_t B, std::size_t L,
                      std::size_t Ci, const T* __restrict w,
                      const T* __restrict bias, std::size_t k, std::size_t Co,
                      std::ptrdiff_t pad_front, T* __restrict out,
                      std::size_t Lo) {
  const std::ptrdiff_t Ls = static_cast<std::ptrdiff_t>(L);

  // Interior range: every tap of windows l and l+1 is in bounds.
  std::ptrdiff_t lo_begin = pad_front > 0 ? pad_front : 0;
  std::ptrdiff_t lo_end = Ls - static_cast<std::ptrdiff_t>(k) + 1 + pad_front;
  if (lo_end > static_cast<std::ptrdiff_t>(Lo))
    lo_end = static_cast<std::ptrdiff_t>(Lo);
  if (lo_begin > lo_end) lo_begin = lo_end;

  for (std::size_t b = 0; b < B; ++b) {
    const T* __restrict in_b = in + b * L * Ci;
    T* __restrict out_b = out + b * Lo * Co;

    auto edge_row = [&](std::size_t l) {
      T* __restrict out_row = out_b + l * Co;
      for (std::size_t co = 0; co < Co; ++co)
        out_row[co] = bias ? bias[co] : T(0);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(l + kk) - pad_front;
        if (src < 0 || src >= Ls) continue;
        const T* __restrict in_row = in_b + src * Ci;
        const T* __restrict w_k = w + kk * Ci * Co;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const T x = in_row[ci];
          const T* __restrict w_row = w_k + ci * Co;
          for (std::size_t co = 0; co < Co; ++co) out_row[co] += x * w_row[co];
        }
      }
    };

    for (std::ptrdiff_t l = 0; l < lo_begin; ++l)
      edge_row(static_cast<std::size_t>(l));
    std::ptrdiff_t l = lo_begin;
    for (; l + 2 <= lo_end; l += 2) {
      T* __restrict r0 = out_b + l * Co;
      T* __restrict r1 = r0 + Co;
      for (std::size_t co = 0; co < Co; ++co) {
        r0[co] = bias ? bias[co] : T(0);
        r1[co] = r0[co];
      }
      const T* base = in_b + (l - pad_front) * Ci;
      for (std::size_t j = 0; j < k * Ci; ++j) {
        const T x0 = base[j];
        const T x1 = base[j + Ci];
        const T* __restrict w_row = w + j * Co;
        for (std::size_t co = 0; co < Co; ++co) {
          const T wv = w_row[co];
          r0[co] += x0 * wv;
          r1[co] += x1 * wv;
        }
      }
    }
    for (; l < lo_end; ++l) edge_row(static_cast<std::size_t>(l));
    for (l = lo_end; l < static_cast<std::ptrdiff_t>(Lo); ++l)
      edge_row(static_cast<std::size_t>(l));
  }
}

template <typename T>
void conv1d_forward(const T* in, std::size_t B, std::size_t L, std::size_t Ci,
                    const T* w, const T* bias, std::size_t k, std::size_t Co,
                    Padding padding, T* out, std::size_t Lo) {
  const std::ptrdiff_t pad_front =
      padding == Padding::same ? static_cast<std::ptrdiff_t>((k - 1) / 2) : 0;
  conv1d_correlate(in, B, L, Ci, w, bias, k, Co, pad_front, out, Lo);
}

template <typename T>
void conv1d_backward(const T* __restrict in, std::size_t B, std::size_t L,
                     std::size_t Ci, const T* __restrict w, std::size_t k,
                     std::size_t Co, Padding padding, const T* __restrict g,
                     std::size_t Lo, T* __restrict d_in, T* __restrict d_w,
                     T* __restrict d_bias) {
  const std::ptrdiff_t pad_front =
      padding == Padding::same ? static_cast<std::ptrdiff_t>((k - 1) / 2) : 0;
  const std::ptrdiff_t Ls = static_cast<std::ptrdiff_t>(L);

  if (d_bias) {
    for (std::size_t i = 0; i < B * Lo; ++i) {
      const T* g_row = g + i * Co;
      for (std::size_t co = 0; co < Co; ++co) d_bias[co] += g_row[co];
    }
  }

  if (d_w) {
    // dw[kk,ci,co] += sum over (b,l) of in[b, l+kk-pad, ci] * g[b,l,co].
    // Filter channels are swept in 16-wide chunks held in registers, with
    // four output positions unrolled for independent FMA chains.
    constexpr std::size_t kChunk = 16;
    for (std::size_t b = 0; b < B; ++b) {
      const T* __restrict in_b = in + b * L * Ci;
      const T* __restrict g_b = g + b * Lo * Co;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - pad_front;
        const std::size_t l_begin =
            static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -off));
        const std::size_t l_end = static_cast<std::size_t>(
            std::max<std::ptrdiff_t>(0, std::min<std::ptrdiff_t>(
                                            static_cast<std::ptrdiff_t>(Lo),
                                            Ls - off)));
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          T* __restrict d_w_row = d_w + (kk * Ci + ci) * Co;
          const T* __restrict x_base = in_b + off * Ci + ci;
          std::size_t co0 = 0;
          for (; co0 + kChunk <= Co; co0 += kChunk) {
            T a0[kChunk] = {}, a1[kChunk] = {}, a2[kChunk] = {},
              a3[kChunk] = {};
            const T* __restrict g_c = g_b + co0;
            std::size_t l = l_begin;
            for (; l + 4 <= l_end; l += 4) {
              const T x0 = x_base[(l + 0) * Ci];
              const T x1 = x_base[(l + 1) * Ci];
              const T x2 = x_base[(l + 2) * Ci];
              const T x3 = x_base[(l + 3) * Ci];
              const T* g0 = g_c + (l + 0) * Co;
              const T* g1 = g_c + (l + 1) * Co;
              const T* g2 = g_c + (l + 2) * Co;
              const T* g3 = g_c + (l + 3) * Co;
              for (std::size_t c = 0; c < kChunk; ++c) {
                a0[c] += x0 * g0[c];
                a1[c] += x1 * g1[c];
                a2[c] += x2 * g2[c];
                a3[c] += x3 * g3[c];
              }
            }
            for (; l < l_end; ++l) {
              const T x0 = x_base[l * Ci];
              const T* g0 = g_c + l * Co;
              for (std::size_t c = 0; c < kChunk; ++c) a0[c] += x0 * g0[c];
            }
            for (std::size_t c = 0; c < kChunk; ++c)
              d_w_row[co0 + c] += a0[c] + a1[c] + a2[c] + a3[c];
          }
          for (; co0 < Co; ++co0) {
            T acc = T(0);
            for (std::size_t l = l_begin; l < l_end; ++l)
              acc += x_base[l * Ci] * g_b[l * Co + co0];
            d_w_row[co0] += acc;
          }
        }
      }
    }
  }

  if (d_in) {
    // d_in[b,src,ci] = sum_{kk,co} g[b, src+kk'-pad', co] * w'[kk',co,ci]
    // with kk' = k-1-kk and pad' = k-1-pad: the input gradient is the same
    // correlation as the forward pass, run on g with a flipped, transposed
    // kernel, so it reuses the fast forward engine.
    std::vector<T> w_flip(k * Co * Ci);
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t ci = 0; ci < Ci; ++ci)
        for (std::size_t co = 0; co < Co; ++co)
          w_flip[((k - 1 - kk) * Co + co) * Ci + ci] =
              w[(kk * Ci + ci) * Co + co];
    const std::ptrdiff_t pad_back =
        static_cast<std::ptrdiff_t>(k) - 1 - pad_front;
    conv1d_correlate(g, B, Lo, Co, w_flip.data(), static_cast<const T*>(nullptr),
                     k, Ci, pad_back, d_in, L);
  }
}

// out[b,u] = bias[u] + sum_n in[b,n] * w[n,u], batch-tiled for weight reuse.
template <typename T>
void dense_forward(const T* in, std::size_t B, std::size_t N, const T* w,
                   const T* bias, std::size_t U, T* out) {
  constexpr std::size_t kTile = 4;
  for (std::size_t b = 0; b < B; ++b) {
    T* out_row = out + b * U;
    for (std::size_t u = 0; u < U; ++u) out_row[u] = bias[u];
  }
  std::size_t b0 = 0;
  for (; b0 + kTile <= B; b0 += kTile) {
    T* o0 = out + (b0 + 0) * U;
    T* o1 = out + (b0 + 1) * U;
    T* o2 = out + (b0 + 2) * U;
    T* o3 = out + (b0 + 3) * U;
    for (std::size_t n = 0; n < N; ++n) {
      const T* w_row = w + n * U;
      const T x0 = in[(b0 + 0) * N + n];
      const T x1 = in[(b0 + 1) * N + n];
      const T x2 = in[(b0 + 2) * N + n];
      const T x3 = in[(b0 + 3) * N + n];
      for (std::size_t u = 0; u < U; ++u) {
        const T wv = w_row[u];
        o0[u] += x0 * wv;
        o1[u] += x1 * wv;
        o2[u] += x2 * wv;
        o3[u] += x3 * wv;
      }
    }
  }
  for (; b0 < B; ++b0) {
    T* out_row = out + b0 * U;
    const T* in_row = in + b0 * N;
    for (std::size_t n = 0; n < N; ++n) {
      const T x = in_row[n];
      const T* w_row = w + n * U;
      for (std::size_t u = 0; u < U; ++u) out_row[u] += x * w_row[u];
    }
  }
}

template <typename T>
void dense_backward(const T* __restrict in, std::size_t B, std::size_t N,
                    const T* __restrict w, std::size_t U,
                    const T* __restrict g, T* __restrict d_in,
                    T* __restrict d_w, T* __restrict d_bias) {
  if (d_bias) {
    for (std::size_t b = 0; b < B; ++b) {
      const T* g_row = g + b * U;
      for (std::size_t u = 0; u < U; ++u) d_bias[u] += g_row[u];
    }
  }
  if (d_w) {
    // Accumulate one weight row at a time; the [B x U] gradient block stays
    // cache-resident across the sweep. Two batch rows per pass keep two
    // FMA chains in flight.
    std::vector<T> acc(U);
    for (std::size_t n = 0; n < N; ++n) {
      std::fill(acc.begin(), acc.end(), T(0));
      std::size_t b = 0;
      for (; b + 2 <= B; b += 2) {
        const T x0 = in[b * N + n];
        const T x1 = in[(b + 1) * N + n];
        const T* g0 = g + b * U;
        const T* g1 = g0 + U;
        for (std::size_t u = 0; u < U; ++u) acc[u] += x0 * g0[u] + x1 * g1[u];
      }
      for (; b < B; ++b) {
        const T x = in[b * N + n];
        const T* g_row = g + b * U;
        for (std::size_t u = 0; u < U; ++u) acc[u] += x * g_row[u];
      }
      T* d_w_row = d_w + n * U;
      for (std::size_t u = 0; u < U; ++u) d_w_row[u] += acc[u];
    }
  }
  if (d_in) {
    // Four batch rows share each weight row; the four dot products run as
    // independent reduction chains.
    constexpr std::size_t kTile = 4;
    std::size_t b0 = 0;
    for (; b0 + kTile <= B; b0 += kTile) {
      const T* g0 = g + (b0 + 0) * U;
      const T* g1 = g + (b0 + 1) * U;
      const T* g2 = g + (b0 + 2) * U;
      const T* g3 = g + (b0 + 3) * U;
      for (std::size_t n = 0; n < N; ++n) {
        const T* w_row = w + n * U;
        T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
        for (std::size_t u = 0; u < U; ++u) {
          const T wv = w_row[u];
          a0 += g0[u] * wv;
          a1 += g1[u] * wv;
          a2 += g2[u] * wv;
          a3 += g3[u] * wv;
        }
        d_in[(b0 + 0) * N + n] += a0;
        d_in[(b0 + 1) * N + n] += a1;
        d_in[(b0 + 2) * N + n] += a2;
        d_in[(b0 + 3) * N + n] += a3;
      }
    }
    for (; b0 < B; ++b0) {
      const T* g_row = g + b0 * U;
      T* d_in_row = d_in + b0 * N;
      for (std::size_t n = 0; n < N; ++n) {
        const T* w_row = w + n * U;
        T acc = T(0);
        for (std::size_t u = 0; u < U; ++u) acc += g_row[u] * w_row[u];
        d_in_row[n] += acc;
      }
    }
  }
}

template <typename T>
void relu_forward(const T* in, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const T* in, std::size_t n, const T* g, T* d_in) {
  for (std::size_t i = 0; i < n; ++i) d_in[i] = in[i] > T(0) ? g[i] : T(0);
}

}  // namespace kernels

// Single-sample conv1d on [L x Ci] input, mainly for direct use and tests;
// the training path goes through the batched network functions.
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const LayerSpec& spec,
                         const LayerParams<T>& params) {
  if (input.rank() != 2) throw ShapeError("conv1d_forward: want [L x C] input");
  const std::size_t L = input.extent(0), Ci = input.extent(1);
  if (params.weight.rank() != 3 || params.weight.extent(1) != Ci)
    throw ShapeError("conv1d_forward: channel mismatch");
  const std::size_t k = params.weight.extent(0);
  const std::size_t Co = params.weight.extent(2);
  const DataShape out_shape = propagate_shape(spec, {L, Ci, false});
  Tensor<T> out({out_shape.len, Co});
  kernels::conv1d_forward(input.ptr(), 1, L, Ci, params.weight.ptr(),
                          params.bias.ptr(), k, Co, spec.padding, out.ptr(),
                          out_shape.len);
  return out;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const LayerParams<T>& params) {
  if (input.rank() != 1) throw ShapeError("dense_forward: want flat input");
  const std::size_t N = input.extent(0);
  if (params.weight.rank() != 2 || params.weight.extent(0) != N)
    throw ShapeError("dense_forward: input width mismatch");
  const std::size_t U = params.weight.extent(1);
  Tensor<T> out({U});
  kernels::dense_forward(input.ptr(), 1, N, params.weight.ptr(),
                         params.bias.ptr(), U, out.ptr());
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape);
  kernels::relu_forward(input.ptr(), input.size(), out.ptr());
  return out;
}

}  // namespace nilm
