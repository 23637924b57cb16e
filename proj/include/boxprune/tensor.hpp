#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boxprune/common.hpp"

namespace boxprune {

// Dense row-major tensor, rank 1..4. Weight layout follows
// [kernel_h, kernel_w, in_channels, out_channels]; activations are NHWC.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<real> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, real value);

  int rank() const { return int(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[size_t(i)]; }
  int64_t numel() const { return int64_t(data_.size()); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  std::vector<real>& vec() { return data_; }
  const std::vector<real>& vec() const { return data_; }

  real& operator[](int64_t i) { return data_[size_t(i)]; }
  real operator[](int64_t i) const { return data_[size_t(i)]; }

  real& at(int a, int b) { return data_[size_t(a) * shape_[1] + b]; }
  const real& at(int a, int b) const { return data_[size_t(a) * shape_[1] + b]; }
  real& at(int a, int b, int c) {
    return data_[(size_t(a) * shape_[1] + b) * shape_[2] + c];
  }
  const real& at(int a, int b, int c) const {
    return data_[(size_t(a) * shape_[1] + b) * shape_[2] + c];
  }
  real& at(int a, int b, int c, int d) {
    return data_[((size_t(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const real& at(int a, int b, int c, int d) const {
    return data_[((size_t(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(real v) { std::fill(data_.begin(), data_.end(), v); }

  // Throws NumericError naming `context` if any entry is NaN/Inf.
  void check_finite(const std::string& context) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<real> data_;
};

// Rows of `t` along dimension `dim` restricted to `indices` (ascending).
Tensor take(const Tensor& t, int dim, const std::vector<int>& indices);

}  // namespace boxprune
