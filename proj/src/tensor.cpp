#include "boxprune/tensor.hpp"

#include <cmath>
#include <sstream>

namespace boxprune {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(size_t(shape_numel(shape_)), real(0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != int64_t(data_.size())) {
    throw ShapeError("tensor data length does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<int> shape, real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("reshape element count mismatch for " + shape_str());
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::check_finite(const std::string& context) const {
  for (real v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value in " + context);
    }
  }
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

Tensor take(const Tensor& t, int dim, const std::vector<int>& indices) {
  const auto& shape = t.shape();
  if (dim < 0 || dim >= t.rank()) throw ShapeError("take: dim out of range");
  for (int idx : indices) {
    if (idx < 0 || idx >= shape[size_t(dim)]) {
      throw ShapeError("take: index out of range on dim " + std::to_string(dim));
    }
  }
  std::vector<int> out_shape = shape;
  out_shape[size_t(dim)] = int(indices.size());
  Tensor out(out_shape);

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= shape[size_t(i)];
  for (int i = dim + 1; i < t.rank(); ++i) inner *= shape[size_t(i)];
  const int64_t old_dim = shape[size_t(dim)];
  const int64_t new_dim = int64_t(indices.size());

  const real* src = t.data();
  real* dst = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t j = 0; j < new_dim; ++j) {
      const real* s = src + (o * old_dim + indices[size_t(j)]) * inner;
      real* d = dst + (o * new_dim + j) * inner;
      std::copy(s, s + inner, d);
    }
  }
  return out;
}

}  // namespace boxprune
