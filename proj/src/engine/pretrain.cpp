#include <algorithm>
#include <cmath>

#include "pct/errors.hpp"
#include "pct/rng.hpp"
#include "pct/selfsup.hpp"
#include "trainer.hpp"

namespace pct {

std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::N2C:
      return "N2C";
    case SchemeKind::N2N:
      return "N2N";
    case SchemeKind::N2V:
      return "N2V";
  }
  return "?";
}

SchemeKind parse_scheme(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "N2C") return SchemeKind::N2C;
  if (u == "N2N") return SchemeKind::N2N;
  if (u == "N2V") return SchemeKind::N2V;
  throw ConfigError("unknown scheme '" + s + "' (expected N2C, N2N or N2V)");
}

PretrainData make_pretrain_data(const Dataset& ds, std::span<const std::string> subjects, SchemeKind kind) {
  if (kind == SchemeKind::N2N && !ds.synthetic) {
    throw ConfigError("N2N pre-training needs two noise realizations per slice; only synthetic datasets provide them");
  }
  PretrainData data;
  data.kind = kind;
  for (const auto& id : subjects) {
    std::size_t si = ds.subjects.size();
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
      if (ds.subjects[i].id == id) si = i;
    }
    if (si == ds.subjects.size()) throw DataError("dataset has no subject '" + id + "'");
    const SubjectData& sd = ds.subjects[si];
    for (std::size_t k = 0; k < sd.ldct.size(); ++k) {
      data.inputs.push_back(sd.ldct[k].tensor());
      if (kind == SchemeKind::N2C) data.targets.push_back(sd.ndct[k].tensor());
      if (kind == SchemeKind::N2N) data.targets.push_back(ldct_realization(ds, si, k, 1).tensor());
    }
  }
  return data;
}

namespace {

std::size_t reflect(long i, std::size_t n) {
  if (i < 0) i = -i;
  if (i >= static_cast<long>(n)) i = 2 * (static_cast<long>(n) - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

N2vBatch n2v_mask(const Tensor& noisy, double fraction, int window, std::uint64_t seed) {
  const Shape s = noisy.shape();
  if (window < 3 || window % 2 == 0) throw ConfigError("N2V window must be odd and >= 3");
  if (!(fraction > 0.0 && fraction < 0.5)) throw ConfigError("N2V mask fraction must be in (0, 0.5)");
  const long r = window / 2;
  if (s.h <= static_cast<std::size_t>(r) || s.w <= static_cast<std::size_t>(r)) {
    throw ShapeError("N2V patch " + s.str() + " is smaller than the replacement window");
  }
  const std::size_t plane = s.plane();
  const std::size_t per_item =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(plane))));

  N2vBatch out;
  out.input = noisy;
  out.mask = Tensor(s);
  Rng rng(seed);
  std::vector<char> masked(plane);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * plane;
      std::fill(masked.begin(), masked.end(), 0);
      std::vector<std::size_t> chosen;
      while (chosen.size() < per_item) {
        const std::size_t p = uniform_index(rng, plane);
        if (masked[p]) continue;
        masked[p] = 1;
        chosen.push_back(p);
      }
      std::sort(chosen.begin(), chosen.end());
      for (std::size_t p : chosen) {
        const long y = static_cast<long>(p / s.w);
        const long x = static_cast<long>(p % s.w);
        std::size_t src = p;
        for (int attempt = 0;; ++attempt) {
          if (attempt == 10000) throw NumericError("N2V: no unmasked neighbour found; mask fraction too high");
          const long dy = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(window))) - r;
          const long dx = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(window))) - r;
          if (dy == 0 && dx == 0) continue;
          const std::size_t q = reflect(y + dy, s.h) * s.w + reflect(x + dx, s.w);
          if (masked[q]) continue;
          src = q;
          break;
        }
        out.positions.push_back(base + p);
        out.sources.push_back(base + src);
        out.input[base + p] = noisy[base + src];
        out.mask[base + p] = 1.0f;
      }
    }
  }
  return out;
}

PretrainedDenoiser pretrain(const PretrainScheme& scheme, const PretrainData& data, const PretrainConfig& config,
                            std::uint64_t seed, NdjsonLog* log) {
  if (data.kind != scheme.kind) {
    throw ConfigError("pretrain: data prepared for " + to_string(data.kind) + " but scheme is " +
                      to_string(scheme.kind));
  }
  if (data.inputs.empty()) throw ConfigError("pretrain: no training images");
  const bool paired = scheme.kind != SchemeKind::N2V;
  if (paired && data.targets.size() != data.inputs.size()) {
    throw ConfigError(to_string(scheme.kind) + " needs one target per input (" + std::to_string(data.inputs.size()) +
                      " inputs, " + std::to_string(data.targets.size()) + " targets)");
  }
  PretrainedDenoiser out{build_denoiser(config.net, derive_seed(seed, 1)), {}};
  const TrainConfig& tc = config.train;
  const std::vector<Tensor>& targets = paired ? data.targets : data.inputs;
  auto make_batch = [&](std::uint64_t s) {
    PatchBatch pb = sample_patches(data.inputs, targets, tc.batch, tc.patch, derive_seed(s, 1));
    pb = augment(pb, tc.augment, derive_seed(s, 2));
    if (!paired) {
      N2vBatch m = n2v_mask(pb.x, scheme.n2v_fraction, scheme.n2v_window, derive_seed(s, 3));
      return detail::TrainBatch{std::move(m.input), std::move(pb.x), std::move(m.mask)};
    }
    return detail::TrainBatch{std::move(pb.x), std::move(pb.y), {}};
  };
  out.history =
      detail::run_training(out.net, tc, derive_seed(seed, 2), make_batch, log, "pretrain_" + to_string(scheme.kind));
  return out;
}

}  // namespace pct
