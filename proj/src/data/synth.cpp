#include <algorithm>
#include <cmath>
#include <numbers>

#include "pct/data.hpp"
#include "pct/errors.hpp"
#include "pct/rng.hpp"

namespace pct {

namespace {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;
  float value;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return u * u + v * v <= 1.0;
  }
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

CtSlice synth_phantom(std::uint64_t seed, std::size_t size) {
  if (size < 32 || size % 4 != 0) {
    throw ConfigError("phantom size must be >= 32 and divisible by 4, got " + std::to_string(size));
  }
  Rng rng(derive_seed(seed, 0x7068616eull));
  const double s = static_cast<double>(size);
  const auto background = static_cast<float>(uniform(rng, 0.42, 0.52));
  const std::size_t count = 5 + uniform_index(rng, 8);

  std::vector<Ellipse> shapes;
  shapes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    Ellipse e{};
    e.cx = uniform(rng, 0.15, 0.85) * s;
    e.cy = uniform(rng, 0.15, 0.85) * s;
    // A few large organs first, smaller structures later.
    const double scale = i < 3 ? uniform(rng, 0.15, 0.32) : uniform(rng, 0.04, 0.14);
    e.a = scale * s;
    e.b = e.a * uniform(rng, 0.45, 1.0);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    // Organ-like contrast with occasional bright (bone/vessel) and dark (fat) inserts.
    const double kind = uniform01(rng);
    double v = 0.0;
    if (kind < 0.15) {
      v = uniform(rng, 0.82, 0.95);
    } else if (kind < 0.3) {
      v = uniform(rng, 0.18, 0.3);
    } else {
      v = uniform(rng, 0.35, 0.72);
    }
    e.value = static_cast<float>(v);
    shapes.push_back(e);
  }

  CtSlice out;
  out.height = size;
  out.width = size;
  out.pixels.assign(size * size, background);
  out.dose = Dose::Normal;
  out.source = SliceSource::Synthetic;
  // 2x2 supersampling softens the ellipse edges.
  constexpr double kSub[2] = {0.25, 0.75};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      float acc = 0.0f;
      for (double sy : kSub) {
        for (double sx : kSub) {
          float v = background;
          for (const auto& e : shapes) {
            if (e.contains(static_cast<double>(x) + sx, static_cast<double>(y) + sy)) v = e.value;
          }
          acc += v;
        }
      }
      out.pixels[y * size + x] = std::clamp(acc * 0.25f, 0.0f, 1.0f);
    }
  }
  return out;
}

const std::array<float, 25>& ldct_smoothing_kernel() {
  // Separable Gaussian, sigma 0.6 px, unit L2 norm so white noise keeps its
  // variance. Lag-1 correlation of the filtered noise is about 0.5.
  static const std::array<float, 25> kernel = [] {
    constexpr double sigma = 0.6;
    double taps[5];
    for (int i = 0; i < 5; ++i) taps[i] = std::exp(-0.5 * (i - 2) * (i - 2) / (sigma * sigma));
    std::array<float, 25> k{};
    double norm = 0.0;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) norm += (taps[i] * taps[j]) * (taps[i] * taps[j]);
    }
    norm = std::sqrt(norm);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) k[i * 5 + j] = static_cast<float>(taps[i] * taps[j] / norm);
    }
    return k;
  }();
  return kernel;
}

StreakParams streak_params(std::uint64_t subject_seed, const LdctNoiseSpec& spec) {
  Rng rng(derive_seed(subject_seed, 0x73747265616bull));
  StreakParams p;
  p.angle = uniform(rng, 0.0, std::numbers::pi);
  p.amplitude = spec.streak_amplitude * uniform(rng, 0.7, 1.3);
  p.period = uniform(rng, 1.0, 2.0);
  return p;
}

CtSlice synth_ldct(const CtSlice& ndct, double dose_factor, std::uint64_t subject_seed,
                   std::uint64_t realization_seed, const LdctNoiseSpec& spec) {
  if (!(dose_factor > 0.0 && dose_factor <= 1.0)) {
    throw ConfigError("dose_factor must be in (0, 1], got " + std::to_string(dose_factor));
  }
  CtSlice out = ndct;
  out.dose = Dose::Low;
  out.source = SliceSource::Synthetic;
  if (dose_factor == 1.0) return out;

  const std::size_t h = ndct.height;
  const std::size_t w = ndct.width;
  const double deficit = 1.0 - dose_factor;
  auto sigma_at = [&](long y, long x) {
    const long cy = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    const long cx = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    const double p = ndct.pixels[static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx)];
    return spec.sigma0 * std::sqrt(deficit * (0.2 + p));
  };

  Rng rng(derive_seed(realization_seed, subject_seed, 0x6e6f697365ull));
  // Signal-scaled white noise on a 2-pixel apron, then the fixed 5x5 smoothing.
  const std::size_t ph = h + 4;
  const std::size_t pw = w + 4;
  std::vector<double> white(ph * pw);
  for (std::size_t y = 0; y < ph; ++y) {
    for (std::size_t x = 0; x < pw; ++x) {
      white[y * pw + x] = sigma_at(static_cast<long>(y) - 2, static_cast<long>(x) - 2) * standard_normal(rng);
    }
  }
  const auto& kernel = ldct_smoothing_kernel();

  // Streaks: a smoothed 1-D random profile across the streak direction,
  // constant along it.
  const StreakParams sp = streak_params(subject_seed, spec);
  const double dir_x = std::cos(sp.angle);
  const double dir_y = std::sin(sp.angle);
  const double half_diag = 0.5 * std::hypot(static_cast<double>(h), static_cast<double>(w)) + 4.0;
  const auto profile_len = static_cast<std::size_t>(2.0 * half_diag) + 1;
  std::vector<double> raw_profile(profile_len + 8);
  for (auto& v : raw_profile) v = standard_normal(rng);
  std::vector<double> profile(profile_len);
  {
    double kn = 0.0;
    std::array<double, 9> g{};
    for (int i = -4; i <= 4; ++i) {
      g[static_cast<std::size_t>(i + 4)] = std::exp(-0.5 * (i * i) / (sp.period * sp.period));
      kn += g[static_cast<std::size_t>(i + 4)] * g[static_cast<std::size_t>(i + 4)];
    }
    kn = std::sqrt(kn);
    for (std::size_t t = 0; t < profile_len; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 9; ++i) acc += g[i] * raw_profile[t + i];
      profile[t] = acc / kn;
    }
  }
  const double cx0 = 0.5 * static_cast<double>(w);
  const double cy0 = 0.5 * static_cast<double>(h);

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double n = 0.0;
      for (std::size_t ky = 0; ky < 5; ++ky) {
        const double* row = &white[(y + ky) * pw + x];
        for (std::size_t kx = 0; kx < 5; ++kx) n += kernel[ky * 5 + kx] * row[kx];
      }
      // Signed distance across the streaks.
      const double t = -(static_cast<double>(x) - cx0) * dir_y + (static_cast<double>(y) - cy0) * dir_x + half_diag;
      const auto t0 = static_cast<std::size_t>(std::floor(t));
      const double frac = t - static_cast<double>(t0);
      const double streak = (1.0 - frac) * profile[t0] + frac * profile[std::min(t0 + 1, profile_len - 1)];
      n += sp.amplitude * sigma_at(static_cast<long>(y), static_cast<long>(x)) * streak;
      const std::size_t i = y * w + x;
      out.pixels[i] = static_cast<float>(std::clamp(ndct.pixels[i] + n, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace pct
