#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pct {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense rank-4 float array in (batch, channel, height, width) order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& vec() const { return data_; }

  // Same shape and element-wise equal values.
  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Pointer to the (n, c) image plane.
  float* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const float* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(float v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(float s);

  // Copies batch item `i` into a (1, c, h, w) tensor.
  Tensor item(std::size_t i) const;
  // Copies a (1, c, ph, pw) window starting at (y, x) of batch item `i`.
  Tensor crop(std::size_t i, std::size_t y, std::size_t x, std::size_t ph, std::size_t pw) const;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);

// Stacks equally shaped (1, c, h, w) tensors along the batch axis.
Tensor stack(std::span<const Tensor> items);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace pct
