#include "pct/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "../engine/trainer.hpp"
#include "pct/errors.hpp"
#include "pct/rng.hpp"

namespace pct {

Tensor noise_map(const CtSlice& x, const CtSlice& y) {
  if (x.height != y.height || x.width != y.width) throw ShapeError("noise_map: LDCT and NDCT sizes differ");
  return x.tensor() - y.tensor();
}

TrainedNoiseModel train_noise_model(std::span<const CtSlice> x, std::span<const CtSlice> y,
                                    const NoiseTrainConfig& config, std::uint64_t seed, NdjsonLog* log) {
  if (x.empty()) throw ConfigError("train_noise_model: no training pairs");
  if (x.size() != y.size()) throw ConfigError("train_noise_model: LDCT/NDCT counts differ");
  std::vector<Tensor> xs;
  std::vector<Tensor> zs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs.push_back(x[i].tensor());
    zs.push_back(noise_map(x[i], y[i]));
  }
  TrainedNoiseModel out{build_noise_net(config.net, derive_seed(seed, 1)), {}};
  const TrainConfig& tc = config.train;
  auto make_batch = [&](std::uint64_t s) {
    PatchBatch pb = sample_patches(xs, zs, tc.batch, tc.patch, derive_seed(s, 1));
    pb = augment(pb, tc.augment, derive_seed(s, 2));
    return detail::TrainBatch{std::move(pb.x), std::move(pb.y), {}};
  };
  out.history = detail::run_training(out.net, tc, derive_seed(seed, 2), make_batch, log, "noise_model");
  return out;
}

NoiseEnsemble::NoiseEnsemble(std::vector<NoiseNet> models, std::vector<std::string> subject_ids)
    : models_(std::move(models)), subject_ids_(std::move(subject_ids)) {
  if (models_.empty()) throw ConfigError("NoiseEnsemble needs at least one model");
  if (subject_ids_.empty()) {
    for (std::size_t i = 0; i < models_.size(); ++i) subject_ids_.push_back("model" + std::to_string(i));
  }
  if (subject_ids_.size() != models_.size()) throw ConfigError("NoiseEnsemble: one subject id per model required");
}

NoiseMapSet NoiseMapSet::crop(std::size_t item, std::size_t y, std::size_t x, std::size_t ph, std::size_t pw) const {
  NoiseMapSet out;
  out.maps.reserve(maps.size());
  for (const auto& m : maps) out.maps.push_back(m.crop(item, y, x, ph, pw));
  return out;
}

NoiseMapSet predict_noise_set(const NoiseEnsemble& ens, const Tensor& x) {
  NoiseMapSet set;
  for (const auto& net : ens.models()) set.maps.push_back(predict_noise(net, x));
  return set;
}

Tensor ensemble_noise(const NoiseMapSet& set, std::uint64_t seed, std::vector<std::uint32_t>* selection) {
  if (set.maps.empty()) throw ConfigError("ensemble_noise: empty noise map set");
  const Shape s = set.maps.front().shape();
  for (const auto& m : set.maps) require_same_shape(set.maps.front(), m, "ensemble_noise maps");
  const std::size_t m = set.maps.size();
  Tensor out(s);
  if (selection != nullptr) selection->assign(out.size(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto j = static_cast<std::uint32_t>(uniform_index(rng, m));
    out[i] = set.maps[j][i];
    if (selection != nullptr) (*selection)[i] = j;
  }
  return out;
}

NoiseHistogram::NoiseHistogram(std::span<const Tensor> diff_maps) {
  if (diff_maps.empty()) throw ConfigError("hist_noise: no difference maps");
  lo_ = std::numeric_limits<double>::infinity();
  hi_ = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& t : diff_maps) {
    if (!t.all_finite()) throw NumericError("hist_noise: difference map contains non-finite values");
    for (float v : t.values()) {
      lo_ = std::min(lo_, static_cast<double>(v));
      hi_ = std::max(hi_, static_cast<double>(v));
      sum += v;
      ++total_;
    }
  }
  if (total_ == 0) throw ConfigError("hist_noise: difference maps are empty");
  mean_ = sum / static_cast<double>(total_);
  const double width = bin_width();
  for (const auto& t : diff_maps) {
    for (float v : t.values()) {
      std::size_t b = 0;
      if (width > 0.0) b = std::min(kBins - 1, static_cast<std::size_t>((v - lo_) / width));
      ++counts_[b];
    }
  }
  double acc = 0.0;
  for (std::size_t b = 0; b < kBins; ++b) {
    acc += static_cast<double>(counts_[b]);
    cdf_[b] = acc / static_cast<double>(total_);
  }
  cdf_[kBins - 1] = 1.0;
}

Tensor NoiseHistogram::sample(const Shape& shape, std::uint64_t seed) const {
  if (total_ == 0) throw StateError("NoiseHistogram::sample on an empty histogram");
  Tensor out(shape);
  Rng rng(seed);
  const double width = bin_width();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = uniform01(rng);
    const double jitter = uniform01(rng);
    const auto b = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    const std::size_t bin = std::min(b, kBins - 1);
    out[i] = static_cast<float>(lo_ + (static_cast<double>(bin) + jitter) * width);
  }
  return out;
}

Tensor hist_noise(std::span<const Tensor> diff_maps, const Shape& shape, std::uint64_t seed) {
  return NoiseHistogram(diff_maps).sample(shape, seed);
}

Tensor gaussian_noise(const Shape& shape, std::uint64_t seed, double stddev) {
  Tensor out(shape);
  Rng rng(seed);
  for (auto& v : out.values()) v = static_cast<float>(stddev * standard_normal(rng));
  return out;
}

Tensor blend_model_hist(const Tensor& model_map, const NoiseHistogram& hist, std::uint64_t seed,
                        BlendWeights weights) {
  const Tensor h = hist.sample(model_map.shape(), seed);
  Tensor out(model_map.shape());
  const auto wm = static_cast<float>(weights.model);
  const auto wh = static_cast<float>(weights.hist);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wm * model_map[i] + wh * h[i];
  return out;
}

Tensor model_plus_hist(const NoiseEnsemble& ens, const NoiseHistogram& hist, const Tensor& x, std::uint64_t seed,
                       BlendWeights weights) {
  if (ens.size() != 1) {
    throw ConfigError("model_plus_hist needs exactly one noise model, got " + std::to_string(ens.size()));
  }
  return blend_model_hist(predict_noise(ens.model(0), x), hist, seed, weights);
}

Tensor model_plus_hist(const NoiseEnsemble& ens, std::span<const Tensor> diff_maps, const Tensor& x,
                       std::uint64_t seed, BlendWeights weights) {
  return model_plus_hist(ens, NoiseHistogram(diff_maps), x, seed, weights);
}

std::filesystem::path save_ensemble(const NoiseEnsemble& ens, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const std::string file = "noise_" + std::to_string(i) + ".pctw";
    save_weights(ens.model(i), dir / file);
    members.push_back({{"subject", ens.subject_ids()[i]}, {"weights", file}});
  }
  const auto manifest = dir / "ensemble.json";
  std::ofstream f(manifest);
  if (!f) throw DataError("cannot write " + manifest.string());
  f << nlohmann::json{{"members", members}}.dump(2) << "\n";
  return manifest;
}

NoiseEnsemble load_ensemble(const std::filesystem::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw DataError("cannot open ensemble manifest " + manifest.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed ensemble manifest " + manifest.string() + ": " + e.what());
  }
  std::vector<NoiseNet> models;
  std::vector<std::string> ids;
  for (const auto& m : j.at("members")) {
    models.push_back(load_noise_net(manifest.parent_path() / m.at("weights").get<std::string>()));
    ids.push_back(m.at("subject").get<std::string>());
  }
  return NoiseEnsemble(std::move(models), std::move(ids));
}

double lag1_autocorrelation(const Tensor& t) {
  const Shape s = t.shape();
  double sum = 0.0;
  for (float v : t.values()) sum += v;
  const double mean = sum / static_cast<double>(t.size());
  double var = 0.0;
  for (float v : t.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t.size());
  if (var <= 0.0) return 0.0;
  double cov_h = 0.0;
  double cov_v = 0.0;
  std::size_t n_h = 0;
  std::size_t n_v = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* p = t.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          const double a = p[y * s.w + x] - mean;
          if (x + 1 < s.w) {
            cov_h += a * (p[y * s.w + x + 1] - mean);
            ++n_h;
          }
          if (y + 1 < s.h) {
            cov_v += a * (p[(y + 1) * s.w + x] - mean);
            ++n_v;
          }
        }
      }
    }
  }
  double r = 0.0;
  int dirs = 0;
  if (n_h > 0) {
    r += cov_h / static_cast<double>(n_h) / var;
    ++dirs;
  }
  if (n_v > 0) {
    r += cov_v / static_cast<double>(n_v) / var;
    ++dirs;
  }
  return dirs > 0 ? r / dirs : 0.0;
}

}  // namespace pct
