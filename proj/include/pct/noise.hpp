#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pct/data.hpp"
#include "pct/networks.hpp"
#include "pct/tensor.hpp"
#include "pct/training.hpp"

namespace pct {

struct NoiseTrainConfig {
  NoiseNetConfig net{};
  TrainConfig train{};
};

struct TrainedNoiseModel {
  NoiseNet net;
  TrainHistory history;
};

// Trains one noise network on a single subject's (X, Y) slices to regress
// Z = X - Y with the configured loss (L1 by default).
TrainedNoiseModel train_noise_model(std::span<const CtSlice> x, std::span<const CtSlice> y,
                                    const NoiseTrainConfig& config, std::uint64_t seed, NdjsonLog* log = nullptr);

// Z = X - Y for an aligned slice pair, as a (1,1,h,w) tensor.
Tensor noise_map(const CtSlice& x, const CtSlice& y);

// m frozen per-subject noise networks.
class NoiseEnsemble {
 public:
  NoiseEnsemble() = default;
  NoiseEnsemble(std::vector<NoiseNet> models, std::vector<std::string> subject_ids);

  std::size_t size() const { return models_.size(); }
  const NoiseNet& model(std::size_t i) const { return models_.at(i); }
  const std::vector<NoiseNet>& models() const { return models_; }
  const std::vector<std::string>& subject_ids() const { return subject_ids_; }

 private:
  std::vector<NoiseNet> models_;
  std::vector<std::string> subject_ids_;
};

struct NoiseMapSet {
  std::vector<Tensor> maps;

  std::size_t size() const { return maps.size(); }
  // Same crop window from every map.
  NoiseMapSet crop(std::size_t item, std::size_t y, std::size_t x, std::size_t ph, std::size_t pw) const;
};

NoiseMapSet predict_noise_set(const NoiseEnsemble& ens, const Tensor& x);

// Per pixel, picks the value of one map chosen uniformly at random. If
// `selection` is non-null it receives the chosen map index per pixel.
Tensor ensemble_noise(const NoiseMapSet& set, std::uint64_t seed, std::vector<std::uint32_t>* selection = nullptr);

// Empirical distribution of pooled difference-map values: 256 equal-width
// bins over [min, max], sampled with uniform jitter inside the chosen bin.
class NoiseHistogram {
 public:
  static constexpr std::size_t kBins = 256;

  NoiseHistogram() = default;
  explicit NoiseHistogram(std::span<const Tensor> diff_maps);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double bin_width() const { return (hi_ - lo_) / static_cast<double>(kBins); }
  const std::array<std::uint64_t, kBins>& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  double mean() const { return mean_; }

  Tensor sample(const Shape& shape, std::uint64_t seed) const;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
  double mean_ = 0.0;
  std::uint64_t total_ = 0;
  std::array<std::uint64_t, kBins> counts_{};
  std::array<double, kBins> cdf_{};
};

Tensor hist_noise(std::span<const Tensor> diff_maps, const Shape& shape, std::uint64_t seed);

inline constexpr double kGaussianNoiseStd = 0.02;
Tensor gaussian_noise(const Shape& shape, std::uint64_t seed, double stddev = kGaussianNoiseStd);

struct BlendWeights {
  double model = 0.5;
  double hist = 0.5;
};

// model * predict_noise(x) + hist * (histogram sample). `ens` must hold
// exactly one model.
Tensor model_plus_hist(const NoiseEnsemble& ens, const NoiseHistogram& hist, const Tensor& x, std::uint64_t seed,
                       BlendWeights weights = {});
Tensor model_plus_hist(const NoiseEnsemble& ens, std::span<const Tensor> diff_maps, const Tensor& x,
                       std::uint64_t seed, BlendWeights weights = {});
// Same blend on an already predicted model map.
Tensor blend_model_hist(const Tensor& model_map, const NoiseHistogram& hist, std::uint64_t seed, BlendWeights weights);

// Writes `noise_<i>.pctw` per member plus `ensemble.json` listing files and
// subject ids. Returns the manifest path.
std::filesystem::path save_ensemble(const NoiseEnsemble& ens, const std::filesystem::path& dir);
NoiseEnsemble load_ensemble(const std::filesystem::path& manifest);

// Lag-1 autocorrelation averaged over the horizontal and vertical directions,
// pooled over all planes of the tensor.
double lag1_autocorrelation(const Tensor& t);

}  // namespace pct
