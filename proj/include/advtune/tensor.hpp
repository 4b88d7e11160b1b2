#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "advtune/errors.hpp"

namespace advtune {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major float64 tensor. The value count always equals the product
// of the (positive) dimensions.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (values_.size() != shape_size(shape_))
      throw DimensionError("tensor of shape " + shape_string(shape_) + " needs " +
                           std::to_string(shape_size(shape_)) + " values, got " +
                           std::to_string(values_.size()));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Elements per leading-dimension slice (per sample for batch tensors).
  std::size_t row_size() const { return shape_.empty() ? 0 : size() / shape_[0]; }

  std::span<double> row(std::size_t i) {
    const std::size_t n = row_size();
    return std::span<double>(values_).subspan(i * n, n);
  }
  std::span<const double> row(std::size_t i) const {
    const std::size_t n = row_size();
    return std::span<const double>(values_).subspan(i * n, n);
  }

  // Gathers the given leading-dimension rows into a new tensor.
  Tensor gather_rows(std::span<const std::size_t> rows) const {
    Shape s = shape_;
    s[0] = rows.size();
    Tensor out;
    out.shape_ = std::move(s);
    out.values_.reserve(rows.size() * row_size());
    for (std::size_t r : rows) {
      auto src = row(r);
      out.values_.insert(out.values_.end(), src.begin(), src.end());
    }
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static void check_shape(const Shape& shape) {
    for (std::size_t d : shape)
      if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
  }

  Shape shape_;
  std::vector<double> values_;
};

}  // namespace advtune
