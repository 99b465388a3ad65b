#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "kernels.hpp"
#include "pct/errors.hpp"
#include "pct/nn.hpp"

namespace pct {

Parameter::Parameter(std::string name_, std::vector<std::size_t> dims_)
    : name(std::move(name_)), dims(std::move(dims_)) {
  const std::size_t count =
      std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding)
    : in_ch_(in_channels),
      out_ch_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", {out_channels}) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw ConfigError("conv " + name + ": channels, kernel and stride must be positive");
  }
}

std::size_t Conv2d::out_extent(std::size_t in_extent) const {
  const std::size_t padded = in_extent + 2 * padding_;
  if (padded < kernel_) {
    throw ShapeError("conv " + weight_.name + ": input extent " + std::to_string(in_extent) + " with padding " +
                     std::to_string(padding_) + " is smaller than kernel " + std::to_string(kernel_));
  }
  return (padded - kernel_) / stride_ + 1;
}

Shape Conv2d::output_shape(const Shape& in) const {
  return Shape{in.n, out_ch_, out_extent(in.h), out_extent(in.w)};
}

void Conv2d::check_input(const Tensor& x) const {
  if (x.shape().c != in_ch_) {
    throw ShapeError("conv " + weight_.name + ": expected " + std::to_string(in_ch_) + " input channels, got " +
                     x.shape().str());
  }
  (void)output_shape(x.shape());
}

Tensor Conv2d::infer(const Tensor& x) const {
  check_input(x);
  const Shape in = x.shape();
  const Shape out_shape = output_shape(in);
  const std::size_t npix = out_shape.plane();
  const std::size_t kdim = in_ch_ * kernel_ * kernel_;
  Tensor out(out_shape);
  std::vector<float> col(kdim * npix);
  for (std::size_t n = 0; n < in.n; ++n) {
    kernels::im2col(x.plane(n, 0), in_ch_, in.h, in.w, kernel_, stride_, padding_, out_shape.h, out_shape.w,
                    col.data());
    float* dst = out.plane(n, 0);
    for (std::size_t co = 0; co < out_ch_; ++co) std::fill(dst + co * npix, dst + (co + 1) * npix, bias_.value[co]);
    kernels::gemm(out_ch_, npix, kdim, weight_.value.data(), kdim, 1, col.data(), dst, true);
  }
  return out;
}

Tensor Conv2d::forward(const Tensor& x) {
  Tensor out = infer(x);
  cached_input_ = x;
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  if (!cached_input_) throw StateError("conv " + weight_.name + ": backward called before forward");
  const Tensor& x = *cached_input_;
  const Shape in = x.shape();
  const Shape out_shape = output_shape(in);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv " + weight_.name + ": grad_out shape " + grad_out.shape().str() + " != forward output " +
                     out_shape.str());
  }
  const std::size_t npix = out_shape.plane();
  const std::size_t kdim = in_ch_ * kernel_ * kernel_;
  std::vector<float> col(kdim * npix);
  Tensor grad_in(in);

  for (std::size_t n = 0; n < in.n; ++n) {
    const float* g = grad_out.plane(n, 0);
    for (std::size_t co = 0; co < out_ch_; ++co) {
      double s = 0.0;
      for (std::size_t p = 0; p < npix; ++p) s += g[co * npix + p];
      bias_.grad[co] += static_cast<float>(s);
    }
    kernels::im2col(x.plane(n, 0), in_ch_, in.h, in.w, kernel_, stride_, padding_, out_shape.h, out_shape.w,
                    col.data());
    // dW[co, q] += sum_p g[co, p] * col[q, p]
    kernels::gemm_nt_add(out_ch_, kdim, npix, g, col.data(), weight_.grad.data());
    // dcol[q, p] = sum_co W[co, q] * g[co, p]
    kernels::gemm(kdim, npix, out_ch_, weight_.value.data(), 1, kdim, g, col.data(), false);
    kernels::col2im_add(col.data(), in_ch_, in.h, in.w, kernel_, stride_, padding_, out_shape.h, out_shape.w,
                        grad_in.plane(n, 0));
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Elementwise and structural layers
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input) {
  require_same_shape(grad_out, forward_input, "relu backward");
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = forward_input[i] > 0.0f ? grad_out[i] : 0.0f;
  return g;
}

Tensor ReLU::forward(const Tensor& x) {
  cached_input_ = x;
  return relu(x);
}

Tensor ReLU::backward(const Tensor& grad_out) const {
  if (!cached_input_) throw StateError("relu: backward called before forward");
  return relu_backward(grad_out, *cached_input_);
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const Shape s = x.shape();
  if (factor == 1) return x;
  Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = x.plane(n, c);
      float* dst = out.plane(n, c);
      const std::size_t ow = s.w * factor;
      for (std::size_t y = 0; y < s.h * factor; ++y) {
        const float* srow = src + (y / factor) * s.w;
        float* drow = dst + y * ow;
        for (std::size_t xx = 0; xx < ow; ++xx) drow[xx] = srow[xx / factor];
      }
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, std::size_t factor) {
  if (factor == 0) throw ShapeError("upsample_nearest_backward: factor must be >= 1");
  const Shape s = grad_out.shape();
  if (factor == 1) return grad_out;
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("upsample_nearest_backward: gradient " + s.str() + " not divisible by factor " +
                     std::to_string(factor));
  }
  Tensor g(Shape{s.n, s.c, s.h / factor, s.w / factor});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = grad_out.plane(n, c);
      float* dst = g.plane(n, c);
      const std::size_t gw = s.w / factor;
      for (std::size_t y = 0; y < s.h; ++y) {
        float* drow = dst + (y / factor) * gw;
        const float* srow = src + y * s.w;
        for (std::size_t xx = 0; xx < s.w; ++xx) drow[xx / factor] += srow[xx];
      }
    }
  }
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane();
  const std::size_t pb = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::memcpy(out.plane(n, 0), a.plane(n, 0), pa * sizeof(float));
    std::memcpy(out.plane(n, sa.c), b.plane(n, 0), pb * sizeof(float));
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t first_channels) {
  const Shape s = x.shape();
  if (first_channels > s.c) {
    throw ShapeError("split_channels: cannot take " + std::to_string(first_channels) + " channels from " + s.str());
  }
  Tensor a(Shape{s.n, first_channels, s.h, s.w});
  Tensor b(Shape{s.n, s.c - first_channels, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::memcpy(a.plane(n, 0), x.plane(n, 0), first_channels * s.plane() * sizeof(float));
    std::memcpy(b.plane(n, 0), x.plane(n, first_channels), (s.c - first_channels) * s.plane() * sizeof(float));
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

LossKind parse_loss_kind(const std::string& s) {
  if (s == "l1" || s == "L1") return LossKind::L1;
  if (s == "l2" || s == "L2" || s == "mse") return LossKind::L2;
  throw ConfigError("unknown loss kind '" + s + "' (expected l1 or l2)");
}

std::string to_string(LossKind k) { return k == LossKind::L1 ? "l1" : "l2"; }

LossResult l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  const std::size_t count = pred.size();
  LossResult r{0.0, Tensor(pred.shape())};
  if (count == 0) return r;
  const float inv = 1.0f / static_cast<float>(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const float d = pred[i] - target[i];
    sum += std::fabs(static_cast<double>(d));
    r.grad[i] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
  }
  r.value = sum / static_cast<double>(count);
  return r;
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t count = pred.size();
  LossResult r{0.0, Tensor(pred.shape())};
  if (count == 0) return r;
  const float scale = 2.0f / static_cast<float>(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const float d = pred[i] - target[i];
    sum += static_cast<double>(d) * d;
    r.grad[i] = scale * d;
  }
  r.value = sum / static_cast<double>(count);
  return r;
}

LossResult loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  return kind == LossKind::L1 ? l1_loss(pred, target) : mse_loss(pred, target);
}

LossResult masked_loss(LossKind kind, const Tensor& pred, const Tensor& target, const Tensor& mask) {
  require_same_shape(pred, target, "masked_loss");
  require_same_shape(pred, mask, "masked_loss mask");
  LossResult r{0.0, Tensor(pred.shape())};
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) count += mask[i] != 0.0f ? 1 : 0;
  if (count == 0) return r;
  const float inv = 1.0f / static_cast<float>(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0f) continue;
    const float d = pred[i] - target[i];
    if (kind == LossKind::L1) {
      sum += std::fabs(static_cast<double>(d));
      r.grad[i] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
    } else {
      sum += static_cast<double>(d) * d;
      r.grad[i] = 2.0f * inv * d;
    }
  }
  r.value = sum / static_cast<double>(count);
  return r;
}

}  // namespace pct
