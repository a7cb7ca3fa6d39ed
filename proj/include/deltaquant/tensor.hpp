#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deltaquant/error.hpp"

namespace dq {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Named, shaped, row-major array. Data is stored flat; 2-D views are
/// obtained with `as_matrix`.
template <typename Scalar>
struct BasicTensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::string name;
  Shape shape;
  Array data;

  BasicTensor() = default;
  BasicTensor(std::string name_, Shape shape_)
      : name(std::move(name_)), shape(std::move(shape_)), data(Array::Zero(numel(shape))) {}
  BasicTensor(std::string name_, Shape shape_, Array data_)
      : name(std::move(name_)), shape(std::move(shape_)), data(std::move(data_)) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor '" + name + "': shape " + to_string(shape) + " holds " +
                       std::to_string(numel(shape)) + " elements but data has " +
                       std::to_string(data.size()));
    }
  }

  std::int64_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool all_finite() const { return data.isFinite().all(); }

  Eigen::Map<const RowMajorMatrix> as_matrix() const {
    if (rank() != 2) throw ShapeError("tensor '" + name + "' is not 2-D");
    return {data.data(), shape[0], shape[1]};
  }
};

using Tensor = BasicTensor<float>;

/// Throws ShapeError unless the two shapes are identical.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);

/// Throws InvalidValue naming the tensor if any element is NaN or infinite.
void require_finite(const Tensor& t);

}  // namespace dq
