#include <algorithm>
#include <cmath>

#include "pct/errors.hpp"
#include "pct/optim.hpp"
#include "pct/rng.hpp"
#include "pct/selfsup.hpp"

namespace pct {

DenoiserState DenoiserState::from_pretrained(const DenoiserNet& net, std::size_t period, double alpha) {
  if (period == 0) throw ConfigError("update period C must be positive");
  return DenoiserState{net, net, 0, period, alpha};
}

PseudoPair make_pseudo_pair(const Tensor& y_tilde, Tensor noise) {
  require_same_shape(y_tilde, noise, "pseudo pair");
  PseudoPair p;
  p.y_tilde = y_tilde;
  p.x_tilde = y_tilde + noise;
  // Record the noise actually carried by the pair (x~ - y~) so the algebra
  // holds exactly after float rounding.
  p.noise_used = p.x_tilde - p.y_tilde;
  return p;
}

PseudoPair generate_pseudo_pair(const DenoiserState& state, const NoiseEnsemble& ens, const Tensor& x,
                                std::uint64_t seed) {
  const Tensor y_tilde = denoise(state.theta, x);
  return make_pseudo_pair(y_tilde, ensemble_noise(predict_noise_set(ens, x), seed));
}

std::string to_string(NoiseStrategy s) {
  switch (s) {
    case NoiseStrategy::Ensemble:
      return "ensemble";
    case NoiseStrategy::Hist:
      return "hist";
    case NoiseStrategy::Gaussian:
      return "gaussian";
    case NoiseStrategy::ModelPlusHist:
      return "model+hist";
  }
  return "?";
}

NoiseStrategy parse_noise_strategy(const std::string& s) {
  if (s == "ensemble") return NoiseStrategy::Ensemble;
  if (s == "hist") return NoiseStrategy::Hist;
  if (s == "gaussian") return NoiseStrategy::Gaussian;
  if (s == "model+hist" || s == "model_plus_hist") return NoiseStrategy::ModelPlusHist;
  throw ConfigError("unknown noise strategy '" + s + "' (expected ensemble, hist, gaussian or model+hist)");
}

namespace {

Shape patch_shape(std::span<const PatchOrigin> origins, std::size_t patch) {
  return Shape{origins.size(), 1, patch, patch};
}

Tensor crop_batch(std::span<const Tensor> images, std::span<const PatchOrigin> origins, std::size_t patch) {
  Tensor out(patch_shape(origins, patch));
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const Tensor& img = images[origins[i].slice];
    const Shape s = img.shape();
    for (std::size_t y = 0; y < patch; ++y) {
      const float* src = img.data() + (origins[i].y + y) * s.w + origins[i].x;
      std::copy(src, src + patch, out.plane(i, 0) + y * patch);
    }
  }
  return out;
}

class EnsembleSource final : public PseudoNoiseSource {
 public:
  explicit EnsembleSource(std::vector<NoiseMapSet> maps) : maps_(std::move(maps)) {
    if (maps_.empty()) throw ConfigError("ensemble noise source has no images");
    for (const auto& m : maps_) {
      if (m.maps.empty()) throw ConfigError("ensemble noise source: empty noise map set");
    }
  }

  Tensor sample(std::span<const PatchOrigin> origins, std::size_t patch, std::uint64_t seed) const override {
    const std::size_t m = maps_.front().size();
    NoiseMapSet cropped;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<Tensor> per_image;
      per_image.reserve(maps_.size());
      for (const auto& set : maps_) per_image.push_back(set.maps.at(j));
      cropped.maps.push_back(crop_batch(per_image, origins, patch));
    }
    return ensemble_noise(cropped, seed);
  }

  std::string name() const override { return "ensemble"; }

 private:
  std::vector<NoiseMapSet> maps_;
};

class HistSource final : public PseudoNoiseSource {
 public:
  explicit HistSource(NoiseHistogram hist) : hist_(std::move(hist)) {}
  Tensor sample(std::span<const PatchOrigin> origins, std::size_t patch, std::uint64_t seed) const override {
    return hist_.sample(patch_shape(origins, patch), seed);
  }
  std::string name() const override { return "hist"; }

 private:
  NoiseHistogram hist_;
};

class GaussianSource final : public PseudoNoiseSource {
 public:
  explicit GaussianSource(double stddev) : stddev_(stddev) {}
  Tensor sample(std::span<const PatchOrigin> origins, std::size_t patch, std::uint64_t seed) const override {
    return gaussian_noise(patch_shape(origins, patch), seed, stddev_);
  }
  std::string name() const override { return "gaussian"; }

 private:
  double stddev_;
};

class ModelPlusHistSource final : public PseudoNoiseSource {
 public:
  ModelPlusHistSource(std::vector<Tensor> maps, NoiseHistogram hist, BlendWeights w)
      : maps_(std::move(maps)), hist_(std::move(hist)), weights_(w) {
    if (maps_.empty()) throw ConfigError("model+hist noise source has no images");
  }
  Tensor sample(std::span<const PatchOrigin> origins, std::size_t patch, std::uint64_t seed) const override {
    return blend_model_hist(crop_batch(maps_, origins, patch), hist_, seed, weights_);
  }
  std::string name() const override { return "model+hist"; }

 private:
  std::vector<Tensor> maps_;
  NoiseHistogram hist_;
  BlendWeights weights_;
};

}  // namespace

std::unique_ptr<PseudoNoiseSource> make_ensemble_source(std::vector<NoiseMapSet> maps) {
  return std::make_unique<EnsembleSource>(std::move(maps));
}

std::unique_ptr<PseudoNoiseSource> make_ensemble_source(const NoiseEnsemble& ens, std::span<const Tensor> images) {
  std::vector<NoiseMapSet> maps;
  maps.reserve(images.size());
  for (const auto& x : images) maps.push_back(predict_noise_set(ens, x));
  return make_ensemble_source(std::move(maps));
}

std::unique_ptr<PseudoNoiseSource> make_hist_source(NoiseHistogram hist) {
  return std::make_unique<HistSource>(std::move(hist));
}

std::unique_ptr<PseudoNoiseSource> make_gaussian_source(double stddev) {
  return std::make_unique<GaussianSource>(stddev);
}

std::unique_ptr<PseudoNoiseSource> make_model_plus_hist_source(std::vector<Tensor> model_maps, NoiseHistogram hist,
                                                               BlendWeights weights) {
  return std::make_unique<ModelPlusHistSource>(std::move(model_maps), std::move(hist), weights);
}

FinetuneResult finetune(DenoiserState state, const PseudoNoiseSource& noise, std::span<const Tensor> x_test,
                        const FinetuneConfig& config, std::uint64_t seed, const FinetuneHooks& hooks) {
  if (x_test.empty()) throw ConfigError("finetune: no test images");
  if (state.period == 0) throw ConfigError("finetune: update period C must be positive");
  if (config.batch == 0) throw ConfigError("finetune: batch size must be positive");

  FinetuneResult res{std::move(state), {}, {}, 0, false, config.sync};
  DenoiserState& st = res.state;
  AdamConfig ac;
  ac.lr = st.alpha;
  Adam adam(st.theta_star.parameters(), ac);

  auto do_sync = [&](std::size_t step) {
    st.sync();
    res.sync_steps.push_back(step);
    if (!hooks.checkpoint.empty()) save_weights(st.theta, hooks.checkpoint);
  };

  double ema = 0.0;
  double best = 0.0;
  std::size_t since_best = 0;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const std::uint64_t s = derive_seed(seed, step);
    PatchBatch pb = sample_patches(x_test, x_test, config.batch, config.patch, derive_seed(s, 1));
    pb.y = noise.sample(pb.origins, config.patch, derive_seed(s, 2));
    if (config.augment.enabled) pb = augment(pb, config.augment, derive_seed(s, 3));
    const PseudoPair pair = make_pseudo_pair(denoise(st.theta, pb.x), pb.y);

    st.theta_star.zero_grad();
    const Tensor pred = st.theta_star.forward(pair.x_tilde);
    const LossResult l = loss(config.loss, pred, pair.y_tilde);
    if (!std::isfinite(l.value)) {
      throw NumericError("finetune: non-finite loss at step " + std::to_string(step));
    }
    st.theta_star.backward(l.grad);
    adam.step();
    ++st.count;
    res.losses.push_back(l.value);
    res.steps_run = step;

    bool synced = false;
    if (config.sync && st.count % st.period == 0) {
      do_sync(step);
      synced = true;
    }
    if (hooks.log != nullptr) {
      hooks.log->write({{"step", step}, {"loss", l.value}, {"lr", adam.lr()}, {"sync", synced}});
    }
    if (hooks.on_step) hooks.on_step(FinetuneStepInfo{step, l.value, synced, &st, &pair});

    ema = step == 1 ? l.value : (1.0 - config.loss_smoothing) * ema + config.loss_smoothing * l.value;
    if (step == 1 || ema < best) {
      best = ema;
      since_best = 0;
    } else if (config.early_stop_patience > 0 && ++since_best >= config.early_stop_patience) {
      res.early_stopped = true;
      if (config.sync && !synced) do_sync(step);
      break;
    }
  }
  return res;
}

FinetuneResult finetune(DenoiserState state, const NoiseEnsemble& ens, std::span<const Tensor> x_test,
                        std::size_t steps, LossKind loss_kind, std::uint64_t seed) {
  const auto source = make_ensemble_source(ens, x_test);
  FinetuneConfig cfg;
  cfg.steps = steps;
  cfg.loss = loss_kind;
  return finetune(std::move(state), *source, x_test, cfg, seed);
}

FinetuneResult finetune_no_sync(DenoiserState state, const NoiseEnsemble& ens, std::span<const Tensor> x_test,
                                std::size_t steps, std::uint64_t seed, LossKind loss_kind) {
  const auto source = make_ensemble_source(ens, x_test);
  FinetuneConfig cfg;
  cfg.steps = steps;
  cfg.loss = loss_kind;
  cfg.sync = false;
  return finetune(std::move(state), *source, x_test, cfg, seed);
}

}  // namespace pct
