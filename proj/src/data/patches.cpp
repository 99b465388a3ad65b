#include <algorithm>
#include <cmath>
#include <set>

#include "pct/data.hpp"
#include "pct/errors.hpp"

namespace pct {

PatchBatch sample_patches(std::span<const Tensor> xs, std::span<const Tensor> ys, std::size_t k, std::size_t patch,
                          std::uint64_t seed) {
  if (xs.empty() || xs.size() != ys.size()) throw ShapeError("sample_patches: need equally many x and y images");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require_same_shape(xs[i], ys[i], "sample_patches pair");
    const Shape s = xs[i].shape();
    if (s.n != 1 || s.c != 1) throw ShapeError("sample_patches expects (1,1,h,w) images, got " + s.str());
    if (s.h < patch || s.w < patch) {
      throw ShapeError("sample_patches: slice " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                       " is smaller than patch " + std::to_string(patch));
    }
  }
  Rng rng(seed);
  std::vector<Tensor> px;
  std::vector<Tensor> py;
  PatchBatch batch;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t idx = xs.size() == 1 ? 0 : uniform_index(rng, xs.size());
    const Shape s = xs[idx].shape();
    const std::size_t y0 = uniform_index(rng, s.h - patch + 1);
    const std::size_t x0 = uniform_index(rng, s.w - patch + 1);
    px.push_back(xs[idx].crop(0, y0, x0, patch, patch));
    py.push_back(ys[idx].crop(0, y0, x0, patch, patch));
    batch.origins.push_back({idx, y0, x0});
  }
  if (k > 0) {
    batch.x = stack(px);
    batch.y = stack(py);
  }
  return batch;
}

PatchBatch sample_patches(const CtSlice& x, const CtSlice& y, std::size_t k, std::size_t patch, std::uint64_t seed) {
  const Tensor xs[1] = {x.tensor()};
  const Tensor ys[1] = {y.tensor()};
  return sample_patches(xs, ys, k, patch, seed);
}

PatchBatch grid_patches(const CtSlice& x, const CtSlice& y, std::size_t patch) {
  if (x.height != y.height || x.width != y.width) throw ShapeError("grid_patches: slice sizes differ");
  if (x.height < patch || x.width < patch) throw ShapeError("grid_patches: slice smaller than patch");
  const Tensor tx = x.tensor();
  const Tensor ty = y.tensor();
  std::vector<Tensor> px;
  std::vector<Tensor> py;
  PatchBatch batch;
  for (std::size_t y0 = 0; y0 + patch <= x.height; y0 += patch) {
    for (std::size_t x0 = 0; x0 + patch <= x.width; x0 += patch) {
      px.push_back(tx.crop(0, y0, x0, patch, patch));
      py.push_back(ty.crop(0, y0, x0, patch, patch));
      batch.origins.push_back({0, y0, x0});
    }
  }
  batch.x = stack(px);
  batch.y = stack(py);
  return batch;
}

std::size_t rescaled_extent(std::size_t extent, double scale) {
  const auto e = static_cast<std::size_t>(std::lround(static_cast<double>(extent) * scale));
  if (e < 8) {
    throw ConfigError("augment: rescaling " + std::to_string(extent) + " by " + std::to_string(scale) +
                      " drops below 8 pixels");
  }
  return e;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Shape s = image.shape();
  if (out_h == s.h && out_w == s.w) return image;
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  const double ry = static_cast<double>(s.h) / static_cast<double>(out_h);
  const double rx = static_cast<double>(s.w) / static_cast<double>(out_w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = image.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * ry - 0.5, 0.0, static_cast<double>(s.h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, s.h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
          const double fx =
              std::clamp((static_cast<double>(x) + 0.5) * rx - 0.5, 0.0, static_cast<double>(s.w - 1));
          const auto x0 = static_cast<std::size_t>(fx);
          const std::size_t x1 = std::min(x0 + 1, s.w - 1);
          const double wx = fx - static_cast<double>(x0);
          const double top = (1.0 - wx) * src[y0 * s.w + x0] + wx * src[y0 * s.w + x1];
          const double bottom = (1.0 - wx) * src[y1 * s.w + x0] + wx * src[y1 * s.w + x1];
          dst[y * out_w + x] = static_cast<float>((1.0 - wy) * top + wy * bottom);
        }
      }
    }
  }
  return out;
}

namespace {

std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

}  // namespace

Tensor reflect_pad_to(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Shape s = image.shape();
  if (out_h < s.h || out_w < s.w) throw ShapeError("reflect_pad_to: target smaller than image");
  const long top = static_cast<long>((out_h - s.h) / 2);
  const long left = static_cast<long>((out_w - s.w) / 2);
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = image.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t sy = reflect_index(static_cast<long>(y) - top, s.h);
        for (std::size_t x = 0; x < out_w; ++x) {
          dst[y * out_w + x] = src[sy * s.w + reflect_index(static_cast<long>(x) - left, s.w)];
        }
      }
    }
  }
  return out;
}

Tensor center_crop_to(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Shape s = image.shape();
  if (out_h > s.h || out_w > s.w) throw ShapeError("center_crop_to: target larger than image");
  const std::size_t top = (s.h - out_h) / 2;
  const std::size_t left = (s.w - out_w) / 2;
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) out.at(n, c, y, x) = image.at(n, c, y + top, x + left);
      }
    }
  }
  return out;
}

Tensor apply_augment(const Tensor& patch, const AugmentDraw& draw) {
  const Shape s = patch.shape();
  Tensor t = patch;
  if (draw.scale != 1.0) {
    const std::size_t eh = rescaled_extent(s.h, draw.scale);
    const std::size_t ew = rescaled_extent(s.w, draw.scale);
    t = resize_bilinear(t, eh, ew);
    if (eh >= s.h && ew >= s.w) {
      t = center_crop_to(t, s.h, s.w);
    } else if (eh <= s.h && ew <= s.w) {
      t = reflect_pad_to(t, s.h, s.w);
    } else {
      throw ShapeError("apply_augment: anisotropic rescale not supported");
    }
  }
  if (draw.hflip || draw.vflip) {
    Tensor f(s);
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        for (std::size_t y = 0; y < s.h; ++y) {
          const std::size_t sy = draw.vflip ? s.h - 1 - y : y;
          for (std::size_t x = 0; x < s.w; ++x) {
            const std::size_t sx = draw.hflip ? s.w - 1 - x : x;
            f.at(n, c, y, x) = t.at(n, c, sy, sx);
          }
        }
      }
    }
    t = std::move(f);
  }
  return t;
}

AugmentDraw draw_augment(const AugmentSpec& spec, Rng& rng) {
  AugmentDraw d;
  // Always consume the same number of variates so item i's draw does not
  // depend on which features are enabled.
  const double u_scale = uniform01(rng);
  const double u_h = uniform01(rng);
  const double u_v = uniform01(rng);
  if (!spec.enabled) return d;
  d.scale = spec.min_scale + (spec.max_scale - spec.min_scale) * u_scale;
  d.hflip = spec.horizontal_flip && u_h < 0.5;
  d.vflip = spec.vertical_flip && u_v < 0.5;
  return d;
}

PatchBatch augment(const PatchBatch& batch, const AugmentSpec& spec, std::uint64_t seed) {
  if (!spec.enabled) return batch;
  require_same_shape(batch.x, batch.y, "augment");
  Rng rng(seed);
  PatchBatch out = batch;
  const std::size_t k = batch.x.shape().n;
  const std::size_t stride = batch.x.shape().c * batch.x.shape().plane();
  for (std::size_t i = 0; i < k; ++i) {
    const AugmentDraw d = draw_augment(spec, rng);
    const Tensor ax = apply_augment(batch.x.item(i), d);
    const Tensor ay = apply_augment(batch.y.item(i), d);
    std::copy(ax.data(), ax.data() + stride, out.x.data() + i * stride);
    std::copy(ay.data(), ay.data() + stride, out.y.data() + i * stride);
  }
  return out;
}

DatasetSplit make_split(std::span<const std::string> subjects, std::size_t n_train, std::size_t n_test,
                        std::uint64_t seed) {
  if (subjects.size() != n_train + n_test) {
    throw ConfigError("make_split: " + std::to_string(subjects.size()) + " subjects cannot be split into " +
                      std::to_string(n_train) + " train + " + std::to_string(n_test) + " test");
  }
  if (std::set<std::string>(subjects.begin(), subjects.end()).size() != subjects.size()) {
    throw ConfigError("make_split: duplicate subject ids");
  }
  std::vector<std::string> order(subjects.begin(), subjects.end());
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(order[i - 1], order[j]);
  }
  DatasetSplit split;
  split.train_subjects.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  split.test_subjects.assign(order.begin() + static_cast<long>(n_train), order.end());
  return split;
}

}  // namespace pct
