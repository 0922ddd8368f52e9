#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "nilm/errors.hpp"

namespace nilm {

// Dense row-major tensor. Deliberately minimal: shape bookkeeping plus flat
// storage; the layer kernels index the raw data directly.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
      : shape(std::move(s)), data(count(shape), fill) {}

  Tensor(std::initializer_list<std::size_t> s, std::vector<T> d)
      : shape(s), data(std::move(d)) {
    if (data.size() != count(shape))
      throw ShapeError("tensor data size does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return s.empty() ? 0 : n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t extent(std::size_t d) const { return shape[d]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // 2-D / 3-D accessors for tests and cold paths.
  T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  T& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  const T& at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  Tensor reshaped(std::vector<std::size_t> s) const {
    if (count(s) != data.size())
      throw ShapeError("reshape changes element count");
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace nilm
