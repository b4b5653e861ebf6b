#include "catintell/tensor.hpp"

#include <cmath>

#include "catintell/error.hpp"

namespace catintell {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    fail(ErrorKind::ShapeError, "tensor data size does not match shape " + shape_.str());
  }
}

double Tensor::item() const {
  if (data_.size() != 1) fail(ErrorKind::ShapeError, "item() on non-scalar " + shape_.str());
  return data_[0];
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

void Tensor::accumulate(const Tensor& other) {
  if (!(other.shape_ == shape_)) {
    fail(ErrorKind::ShapeError, "accumulate " + other.shape_.str() + " into " + shape_.str());
  }
  double* dst = data_.data();
  const double* src = other.data_.data();
  const std::size_t count = data_.size();
#pragma omp simd
  for (std::size_t i = 0; i < count; ++i) dst[i] += src[i];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace catintell
