#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace plc {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Dense row-major array of Real values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real{0});
  Tensor(Shape shape, std::vector<Real> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Bounds-checked multi-index access.
  Real& at(std::initializer_list<std::size_t> index);
  Real at(std::initializer_list<std::size_t> index) const;

  /// Reinterprets the shape; element count must not change.
  void reshape(Shape shape);
  Tensor reshaped(Shape shape) const;
  void fill(Real value);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(Real factor);

  /// Copies `count` entries of axis `axis` starting at `start`.
  Tensor slice(std::size_t axis, std::size_t start, std::size_t count) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// Concatenates along `axis`; all other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

Real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace plc
