#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls into the optimized kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "pct/networks.hpp"
#include "pct/nn.hpp"
#include "pct/tensor.hpp"

namespace oracle {

using pct::Tensor;

inline Tensor random_tensor(pct::Shape s, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Direct six-loop convolution with zero padding, accumulated in double.
inline Tensor conv2d_naive(const Tensor& x, const std::vector<float>& w, const std::vector<float>& b,
                           std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad) {
  const auto s = x.shape();
  const std::size_t oh = (s.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (s.w + 2 * pad - k) / stride + 1;
  Tensor out(s.n, cout, oh, ow);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < s.c; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.h) || ix >= static_cast<long>(s.w)) continue;
                acc += static_cast<double>(w[((co * s.c + ci) * k + ky) * k + kx]) *
                       x.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(n, co, oy, ox) = static_cast<float>(acc);
        }
  return out;
}

// SSIM straight from the per-pixel definition: for every fully contained
// window, weighted means, variances and covariance, then the two-factor
// formula. No separability, no running sums.
inline double ssim_literal(const Tensor& a, const Tensor& b, int win = 11, double sigma = 1.5, double k1 = 0.01,
                           double k2 = 0.03, double range = 1.0) {
  std::vector<double> g1(win);
  double gs = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    g1[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gs += g1[i];
  }
  for (auto& v : g1) v /= gs;
  const double c1 = (k1 * range) * (k1 * range);
  const double c2 = (k2 * range) * (k2 * range);
  const auto s = a.shape();
  double total = 0.0;
  std::size_t planes = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double plane_sum = 0.0;
      std::size_t count = 0;
      for (std::size_t y = 0; y + win <= s.h; ++y)
        for (std::size_t x = 0; x + win <= s.w; ++x) {
          double ma = 0, mb = 0;
          for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j) {
              const double wgt = g1[i] * g1[j];
              ma += wgt * a.at(n, c, y + i, x + j);
              mb += wgt * b.at(n, c, y + i, x + j);
            }
          double va = 0, vb = 0, cov = 0;
          for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j) {
              const double wgt = g1[i] * g1[j];
              const double da = a.at(n, c, y + i, x + j) - ma;
              const double db = b.at(n, c, y + i, x + j) - mb;
              va += wgt * da * da;
              vb += wgt * db * db;
              cov += wgt * da * db;
            }
          plane_sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
          ++count;
        }
      total += plane_sum / static_cast<double>(count);
      ++planes;
    }
  return total / static_cast<double>(planes);
}

// <r, t> in double: the scalar probe loss used for gradient checks.
inline double dot(const Tensor& r, const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += static_cast<double>(r[i]) * t[i];
  return s;
}

struct FdReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t kinked = 0;  // skipped: a ReLU switched inside [x - h, x + h]
  double max_rel = 0.0;
  bool ok() const { return checked > 0 && failed == 0; }
};

// float32 forward passes make the central difference noisy at roughly
// 1e-4 of the output scale, so a gradient that happens to be near zero cannot
// meet a pure relative test. The denominator is floored at a tenth of the RMS
// of the analytic gradients under test.
inline double rel_err(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double rms_floor(const std::vector<double>& analytic) {
  double ss = 0.0;
  for (double a : analytic) ss += a * a;
  return std::max(0.1 * std::sqrt(ss / static_cast<double>(std::max<std::size_t>(1, analytic.size()))), 1e-8);
}

// Central difference at one coordinate. `same_region`, if given, reports
// whether the function is known to be linear on [x - h, x + h]; when it says
// no, the coordinate is counted as kinked instead of checked.
inline void fd_one(FdReport& r, float* p, double analytic, const std::function<double()>& loss, double floor,
                   double h, double tol, const std::function<bool(float*, float, float)>& same_region = {}) {
  const float orig = *p;
  const float hi = static_cast<float>(orig + h);
  const float lo = static_cast<float>(orig - h);
  if (same_region && !same_region(p, lo, hi)) {
    ++r.kinked;
    return;
  }
  *p = hi;
  const double up = loss();
  *p = lo;
  const double down = loss();
  *p = orig;
  // the step actually taken after float rounding
  const double numeric = (up - down) / (static_cast<double>(hi) - lo);
  const double e = rel_err(analytic, numeric, floor);
  r.max_rel = std::max(r.max_rel, e);
  ++r.checked;
  if (e >= tol) ++r.failed;
}

// Central differences (step h) of `loss` around each coordinate, compared
// against `analytic[i]`. Coordinates are restored afterwards.
inline FdReport fd_check(const std::vector<float*>& coords, const std::vector<double>& analytic,
                         const std::function<double()>& loss, double h = 1e-3, double tol = 1e-3) {
  const double floor = rms_floor(analytic);
  FdReport r;
  for (std::size_t i = 0; i < coords.size(); ++i) fd_one(r, coords[i], analytic[i], loss, floor, h, tol);
  return r;
}

// Survival function of the chi-square distribution with 2 degrees of
// freedom, which is exactly exp(-x/2).
inline double chi2_sf_df2(double x) { return std::exp(-0.5 * x); }

// Picks `count` distinct indices in [0, n) (all of them if n <= count).
inline std::vector<std::size_t> pick(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, count));
  return idx;
}

// ---------------------------------------------------------------------------
// Double-precision re-implementations of both architectures, written from
// their documented topology. Used as the finite-difference reference so that
// float32 rounding does not swamp the O(h) differences.
// ---------------------------------------------------------------------------

struct DMap {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> a;
  DMap() = default;
  DMap(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), a(c_ * h_ * w_, 0.0) {}
  double& at(std::size_t ch, std::size_t y, std::size_t x) { return a[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return a[(ch * h + y) * w + x]; }
};

struct DConv {
  const std::vector<double>* w = nullptr;
  const std::vector<double>* b = nullptr;
  std::size_t cin = 0, cout = 0, k = 0, stride = 1, pad = 0;
};

inline DMap dconv(const DMap& x, const DConv& c) {
  const std::size_t oh = (x.h + 2 * c.pad - c.k) / c.stride + 1;
  const std::size_t ow = (x.w + 2 * c.pad - c.k) / c.stride + 1;
  DMap out(c.cout, oh, ow);
  for (std::size_t co = 0; co < c.cout; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = (*c.b)[co];
        for (std::size_t ci = 0; ci < c.cin; ++ci)
          for (std::size_t ky = 0; ky < c.k; ++ky)
            for (std::size_t kx = 0; kx < c.k; ++kx) {
              const long iy = static_cast<long>(oy * c.stride + ky) - static_cast<long>(c.pad);
              const long ix = static_cast<long>(ox * c.stride + kx) - static_cast<long>(c.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h) || ix >= static_cast<long>(x.w)) continue;
              acc += (*c.w)[((co * c.cin + ci) * c.k + ky) * c.k + kx] *
                     x.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
        out.at(co, oy, ox) = acc;
      }
  return out;
}

// ReLU that also records its on/off pattern.
inline DMap drelu(DMap x, std::vector<bool>* pattern) {
  for (auto& v : x.a) {
    if (pattern) pattern->push_back(v > 0.0);
    v = v > 0.0 ? v : 0.0;
  }
  return x;
}

inline DMap dadd(DMap a, const DMap& b) {
  for (std::size_t i = 0; i < a.a.size(); ++i) a.a[i] += b.a[i];
  return a;
}

inline DMap dupsample2(const DMap& x) {
  DMap out(x.c, 2 * x.h, 2 * x.w);
  for (std::size_t c = 0; c < x.c; ++c)
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t xx = 0; xx < out.w; ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
  return out;
}

inline DMap dconcat(const DMap& a, const DMap& b) {
  DMap out(a.c + b.c, a.h, a.w);
  std::copy(a.a.begin(), a.a.end(), out.a.begin());
  std::copy(b.a.begin(), b.a.end(), out.a.begin() + static_cast<long>(a.a.size()));
  return out;
}

inline DMap to_dmap(const Tensor& t) {
  DMap m(t.shape().c, t.shape().h, t.shape().w);
  for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] = t[i];
  return m;
}

// Parameter blocks in the order of net.parameters(): weight, bias per conv.
using DParams = std::vector<std::vector<double>>;

template <class Net>
DParams to_dparams(Net& net) {
  DParams out;
  for (auto* p : net.parameters()) out.emplace_back(p->value.begin(), p->value.end());
  return out;
}

// Encoder: conv+ReLU stages. Decoder, deepest first: conv, add the mirrored
// encoder activation, ReLU; then a linear output conv plus the input.
inline DMap denoiser_forward(const pct::DenoiserConfig& cfg, const DParams& p, const DMap& x,
                             std::vector<bool>* pattern = nullptr) {
  const auto d = static_cast<std::size_t>(cfg.depth);
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto k = static_cast<std::size_t>(cfg.kernel);
  std::vector<DMap> acts;
  DMap h = x;
  for (std::size_t i = 0; i < d; ++i) {
    h = drelu(dconv(h, DConv{&p[2 * i], &p[2 * i + 1], i == 0 ? 1 : c, c, k, 1, k / 2}), pattern);
    acts.push_back(h);
  }
  // parameter blocks after the encoder: dec_{d-1}, ..., dec_0
  std::size_t blk = 2 * d;
  for (std::size_t j = d - 1; j >= 1; --j, blk += 2) {
    h = drelu(dadd(dconv(h, DConv{&p[blk], &p[blk + 1], c, c, k, 1, k / 2}), acts[j - 1]), pattern);
  }
  return dadd(dconv(h, DConv{&p[blk], &p[blk + 1], c, 1, k, 1, k / 2}), x);
}

// stem, per level (stride-2 down, refine), then per level from the deepest:
// nearest x2 + conv, concat with the encoder activation, fuse conv; 1x1 head.
inline DMap noise_forward(const pct::NoiseNetConfig& cfg, const DParams& p, const DMap& x,
                          std::vector<bool>* pattern = nullptr) {
  const auto levels = static_cast<std::size_t>(cfg.levels);
  const auto c = static_cast<std::size_t>(cfg.channels);
  std::size_t blk = 0;
  auto conv = [&](const DMap& in, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride) {
    DMap out = dconv(in, DConv{&p[blk], &p[blk + 1], cin, cout, k, stride, k / 2});
    blk += 2;
    return out;
  };
  std::vector<DMap> skips;
  DMap a = drelu(conv(x, 1, c, 3, 1), pattern);
  for (std::size_t l = 0; l < levels; ++l) {
    skips.push_back(a);
    a = drelu(conv(a, c << l, c << (l + 1), 3, 2), pattern);
    a = drelu(conv(a, c << (l + 1), c << (l + 1), 3, 1), pattern);
  }
  for (std::size_t l = levels; l-- > 0;) {
    a = drelu(conv(dupsample2(a), c << (l + 1), c << l, 3, 1), pattern);
    a = drelu(conv(dconcat(a, skips[l]), 2 * (c << l), c << l, 3, 1), pattern);
  }
  return conv(a, c, 1, 1, 1);
}

// Gradient of <r, net(x)> w.r.t. the parameters (analytic, float32) against
// central differences of the double reference forward `ref`, at `count`
// coordinates. A ReLU network under a linear probe is piecewise linear in each
// parameter, so the central difference is exact when no ReLU switches inside
// the stencil; coordinates whose stencil ends show a different on/off pattern
// than the centre are skipped as kinked and replaced by further candidates.
// Candidates come from every parameter block in proportion to its size, each
// block's first candidate tried first.
// `upstream` is dL/d(output) at the float forward; `probe` evaluates L on the
// double output. Linear and quadratic probes keep the difference exact.
template <class Net, class Ref, class Probe>
FdReport network_fd(Net& net, const Tensor& x, const Tensor& upstream, Probe probe, std::size_t count,
                    std::uint64_t seed, Ref ref, double h = 1e-3, double tol = 1e-3) {
  net.zero_grad();
  net.forward(x);
  net.backward(upstream);
  auto params = net.parameters();
  std::size_t total = 0;
  for (auto* p : params) total += p->size();

  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> firsts, rest;  // (block, index)
  for (std::size_t b = 0; b < params.size(); ++b) {
    const std::size_t share = std::max<std::size_t>(1, 4 * count * params[b]->size() / total);
    const auto idx = pick(params[b]->size(), share, rng());
    firsts.emplace_back(b, idx[0]);
    for (std::size_t k = 1; k < idx.size(); ++k) rest.emplace_back(b, idx[k]);
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> order = firsts;
  order.insert(order.end(), rest.begin(), rest.end());

  std::vector<double> grads;
  for (auto [b, i] : order) grads.push_back(params[b]->grad[i]);
  const double floor = rms_floor(grads);

  DParams dp = to_dparams(net);
  const DMap dx = to_dmap(x);
  auto eval = [&](std::vector<bool>* pattern) { return probe(ref(dp, dx, pattern)); };
  std::vector<bool> centre;
  eval(&centre);

  FdReport rep;
  for (std::size_t k = 0; k < order.size() && rep.checked < count; ++k) {
    auto [b, i] = order[k];
    const double orig = dp[b][i];
    std::vector<bool> pu, pd;
    dp[b][i] = orig + h;
    const double up = eval(&pu);
    dp[b][i] = orig - h;
    const double down = eval(&pd);
    dp[b][i] = orig;
    if (pu != centre || pd != centre) {
      ++rep.kinked;
      continue;
    }
    const double e = rel_err(grads[k], (up - down) / (2.0 * h), floor);
    rep.max_rel = std::max(rep.max_rel, e);
    ++rep.checked;
    if (e >= tol) ++rep.failed;
  }
  return rep;
}

// <r, out>
inline auto linear_probe(const Tensor& r) {
  return [dr = to_dmap(r)](const DMap& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.a.size(); ++i) s += dr.a[i] * out.a[i];
    return s;
  };
}

// mean((out - y)^2)
inline auto mse_probe(const Tensor& y) {
  return [dy = to_dmap(y)](const DMap& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.a.size(); ++i) s += (out.a[i] - dy.a[i]) * (out.a[i] - dy.a[i]);
    return s / static_cast<double>(out.a.size());
  };
}

template <class Probe>
FdReport denoiser_fd(pct::DenoiserNet& net, const Tensor& x, const Tensor& upstream, Probe probe,
                     std::size_t count, std::uint64_t seed) {
  const auto cfg = net.config();
  return network_fd(net, x, upstream, probe, count, seed,
                    [cfg](const DParams& p, const DMap& in, std::vector<bool>* pat) {
                      return denoiser_forward(cfg, p, in, pat);
                    });
}

inline FdReport noise_net_fd(pct::NoiseNet& net, const Tensor& x, const Tensor& r, std::size_t count,
                             std::uint64_t seed) {
  const auto cfg = net.config();
  return network_fd(net, x, r, linear_probe(r), count, seed,
                    [cfg](const DParams& p, const DMap& in, std::vector<bool>* pat) {
                      return noise_forward(cfg, p, in, pat);
                    });
}

}  // namespace oracle
