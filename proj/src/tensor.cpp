#include "depthbins/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace depthbins {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, Scalar fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<Scalar> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  require_shape(data_.size() == shape_numel(shape_), "tensor data does not match shape " + shape_string());
}

int Tensor::rows() const {
  if (shape_.empty()) return 1;
  return static_cast<int>(data_.size() / static_cast<std::size_t>(std::max(1, shape_.back())));
}

int Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
  require_shape(shape_numel(shape) == data_.size(), "cannot reshape " + shape_string());
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
  require_shape(other.size() == size(), "add_: size mismatch " + shape_string() + " vs " + other.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << '}';
  return os.str();
}

}  // namespace depthbins
