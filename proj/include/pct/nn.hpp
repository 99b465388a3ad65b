#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pct/tensor.hpp"

namespace pct {

// A named trainable array with its gradient accumulator.
//
// `dims` is the logical shape written to weight files; `value.size()` always
// equals the product of `dims`.
struct Parameter {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<std::size_t> dims);

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

// 2-D convolution with square kernels, zero padding and an explicit backward pass.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0);

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }
  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }

  // floor((h + 2p - k) / s) + 1, or throws if the window does not fit.
  std::size_t out_extent(std::size_t in_extent) const;
  Shape output_shape(const Shape& in) const;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

  // Caches the input for backward().
  Tensor forward(const Tensor& x);
  // Same arithmetic as forward() without touching the cache.
  Tensor infer(const Tensor& x) const;
  // Accumulates dL/dW and dL/db into the parameter gradients and returns dL/dx.
  Tensor backward(const Tensor& grad_out);

  bool has_cache() const { return cached_input_.has_value(); }
  void clear_cache() { cached_input_.reset(); }

 private:
  void check_input(const Tensor& x) const;

  std::size_t in_ch_ = 0;
  std::size_t out_ch_ = 0;
  std::size_t kernel_ = 1;
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
  Parameter weight_;
  Parameter bias_;
  std::optional<Tensor> cached_input_;
};

Tensor relu(const Tensor& x);
// Passes the gradient where the forward input was strictly positive.
Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input);

// Stateful ReLU that keeps its forward input for backward().
class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  std::optional<Tensor> cached_input_;
};

Tensor upsample_nearest(const Tensor& x, std::size_t factor);
// Sums each factor x factor block of the incoming gradient.
Tensor upsample_nearest_backward(const Tensor& grad_out, std::size_t factor);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits along channels: the first `first_channels` go to .first.
std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t first_channels);

struct LossResult {
  double value = 0.0;
  Tensor grad;
};

enum class LossKind { L1, L2 };

LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind k);

// mean |pred - target|; grad = sign(pred - target) / count.
LossResult l1_loss(const Tensor& pred, const Tensor& target);
// mean (pred - target)^2; grad = 2 (pred - target) / count.
LossResult mse_loss(const Tensor& pred, const Tensor& target);
LossResult loss(LossKind kind, const Tensor& pred, const Tensor& target);

// Same as l1_loss / mse_loss but averaged over positions where mask != 0 only.
// The gradient is zero elsewhere.
LossResult masked_loss(LossKind kind, const Tensor& pred, const Tensor& target, const Tensor& mask);

}  // namespace pct
