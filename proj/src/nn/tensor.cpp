#include "pct/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pct/errors.hpp"

namespace pct {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(float s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor Tensor::item(std::size_t i) const {
  if (i >= shape_.n) throw ShapeError("batch index " + std::to_string(i) + " out of range for " + shape_.str());
  const std::size_t stride = shape_.c * shape_.plane();
  Tensor out(Shape{1, shape_.c, shape_.h, shape_.w});
  std::memcpy(out.data(), data_.data() + i * stride, stride * sizeof(float));
  return out;
}

Tensor Tensor::crop(std::size_t i, std::size_t y, std::size_t x, std::size_t ph, std::size_t pw) const {
  if (i >= shape_.n || y + ph > shape_.h || x + pw > shape_.w) {
    throw ShapeError("crop window (" + std::to_string(y) + "," + std::to_string(x) + ")+" + std::to_string(ph) +
                     "x" + std::to_string(pw) + " exceeds " + shape_.str());
  }
  Tensor out(Shape{1, shape_.c, ph, pw});
  for (std::size_t c = 0; c < shape_.c; ++c) {
    for (std::size_t r = 0; r < ph; ++r) {
      std::memcpy(out.data() + out.index(0, c, r, 0), data_.data() + index(i, c, y + r, x), pw * sizeof(float));
    }
  }
  return out;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  const Shape s = items.front().shape();
  if (s.n != 1) throw ShapeError("stack: items must have batch size 1, got " + s.str());
  Tensor out(Shape{items.size(), s.c, s.h, s.w});
  const std::size_t stride = s.numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].shape() != s) {
      throw ShapeError("stack: shape " + items[i].shape().str() + " differs from " + s.str());
    }
    std::memcpy(out.data() + i * stride, items[i].data(), stride * sizeof(float));
  }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace pct
