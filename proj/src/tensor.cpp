#include "plc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "plc/errors.hpp"

namespace plc {

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor of shape " + shape_str(shape_) + " given " + std::to_string(data_.size()) +
                     " values");
  }
}

namespace {

std::size_t flat_index(const Shape& shape, std::initializer_list<std::size_t> index) {
  if (index.size() != shape.size()) {
    throw ShapeError("index of rank " + std::to_string(index.size()) + " into " + shape_str(shape));
  }
  std::size_t flat = 0, axis = 0;
  for (auto i : index) {
    if (i >= shape[axis]) throw ShapeError("index out of range for " + shape_str(shape));
    flat = flat * shape[axis++] + i;
  }
  return flat;
}

}  // namespace

Real& Tensor::at(std::initializer_list<std::size_t> index) { return data_[flat_index(shape_, index)]; }
Real Tensor::at(std::initializer_list<std::size_t> index) const { return data_[flat_index(shape_, index)]; }

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("add " + shape_str(other.shape_) + " into " + shape_str(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(Real factor) {
  for (auto& v : data_) v *= factor;
  return *this;
}

Tensor Tensor::slice(std::size_t axis, std::size_t start, std::size_t count) const {
  if (axis >= rank() || start + count > shape_[axis]) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + count) + ") of axis " +
                     std::to_string(axis) + " in " + shape_str(shape_));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape_[i];
  for (std::size_t i = axis + 1; i < rank(); ++i) inner *= shape_[i];
  Shape out_shape = shape_;
  out_shape[axis] = count;
  Tensor out(out_shape);
  const std::size_t n = shape_[axis];
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(data_.data() + (o * n + start) * inner, count * inner, out.data() + o * count * inner);
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw ShapeError("concat axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != shape[i]) {
        throw ShapeError("concat extents " + shape_str(s) + " vs " + shape_str(shape));
      }
    }
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  shape[axis] = total;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.dim(axis);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data() + o * n * inner, n * inner, out.data() + (o * total + offset) * inner);
    }
    offset += n;
  }
  return out;
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("compare " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace plc
