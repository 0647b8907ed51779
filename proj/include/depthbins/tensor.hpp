#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace depthbins {

using Scalar = float;

/// Tensor storage. Every buffer starts on Eigen's maximum alignment so that
/// vectorized reductions always sum in the same order, whatever address the
/// allocator hands out; without this, runs are not bit-reproducible.
using ScalarBuffer = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major float array with value semantics.
///
/// Feature maps are stored channels-last as {h, w, c}; token sequences and
/// weight matrices as {rows, cols}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, Scalar fill = Scalar(0));
  Tensor(std::vector<int> shape, std::vector<Scalar> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return data_; }
  std::span<const Scalar> span() const { return data_; }
  ScalarBuffer& storage() { return data_; }
  const ScalarBuffer& storage() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  /// Rows/cols when viewed as a matrix whose last axis is the column axis.
  int rows() const;
  int cols() const;
  MatrixMap matrix() { return {data_.data(), rows(), cols()}; }
  ConstMatrixMap matrix() const { return {data_.data(), rows(), cols()}; }
  ConstMatrixMap cmatrix() const { return matrix(); }

  Tensor reshaped(std::vector<int> shape) const;
  void fill(Scalar v);
  void add_(const Tensor& other);

  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  ScalarBuffer data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace depthbins
