#pragma once

#include <cstdint>
#include <vector>

#include "mfnn/error.hpp"

namespace mfnn {

// Dense row-major float32 array. Activations are N x C x H x W, conv weights
// C_out x C_in_per_group x K x K.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(checked_numel(shape), 0.0f) {}
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw DimensionError("tensor data length does not match shape");
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  float& at4(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  float at4(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  float& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  float at2(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  bool all_finite() const;

  static std::int64_t checked_numel(const std::vector<int>& s);
};

// Throws DimensionError unless both tensors share a shape.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace mfnn
