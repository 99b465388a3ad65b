#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pct/dataset.hpp"
#include "pct/networks.hpp"
#include "pct/noise.hpp"
#include "pct/training.hpp"

namespace pct {

// ---------------------------------------------------------------------------
// Pre-training schemes
// ---------------------------------------------------------------------------

enum class SchemeKind { N2C, N2N, N2V };

std::string to_string(SchemeKind k);
SchemeKind parse_scheme(const std::string& s);

struct PretrainScheme {
  SchemeKind kind = SchemeKind::N2C;
  double n2v_fraction = 0.008;  // share of pixels masked per patch
  int n2v_window = 5;           // replacement neighbourhood side
};

// Training images for one scheme, as (1,1,h,w) tensors.
// N2C: inputs = LDCT, targets = NDCT. N2N: inputs/targets = two independent
// LDCT draws. N2V: inputs = LDCT, targets unused.
struct PretrainData {
  SchemeKind kind = SchemeKind::N2C;
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
};

// Collects the scheme's training images from the given subjects. N2N needs a
// synthetic dataset (second realizations are regenerated from the manifest).
PretrainData make_pretrain_data(const Dataset& ds, std::span<const std::string> subjects, SchemeKind kind);

struct PretrainConfig {
  DenoiserConfig net{};
  TrainConfig train{};
};

struct PretrainedDenoiser {
  DenoiserNet net;
  TrainHistory history;
};

PretrainedDenoiser pretrain(const PretrainScheme& scheme, const PretrainData& data, const PretrainConfig& config,
                            std::uint64_t seed, NdjsonLog* log = nullptr);

// Noise2Void input construction for a batch of noisy patches.
struct N2vBatch {
  Tensor input;   // noisy patches with masked pixels replaced
  Tensor mask;    // 1 at masked pixels, 0 elsewhere
  std::vector<std::size_t> positions;  // flat indices into the batch tensor, ascending
  std::vector<std::size_t> sources;    // flat index each masked pixel was copied from
};

// Masks max(1, round(fraction*h*w)) distinct pixels per item. Each masked
// pixel takes the value of a uniformly drawn neighbour inside the window
// (reflected at borders) that is itself unmasked, so no masked pixel's value
// appears anywhere in the input. The chosen positions and sources depend only
// on the shape and the seed.
N2vBatch n2v_mask(const Tensor& noisy, double fraction, int window, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Pseudo pairs and the sync fine-tuning loop
// ---------------------------------------------------------------------------

struct DenoiserState {
  DenoiserNet theta;       // pseudo-label generator; changed only by sync
  DenoiserNet theta_star;  // trainee
  std::uint64_t count = 0;
  std::size_t period = 10;  // C
  double alpha = 1e-4;

  // theta_star <- theta, count = 0.
  static DenoiserState from_pretrained(const DenoiserNet& net, std::size_t period, double alpha);
  void sync() { theta.copy_parameters_from(theta_star); }
};

struct PseudoPair {
  Tensor x_tilde;
  Tensor y_tilde;
  Tensor noise_used;
};

// y~ = f_theta(x), z = ensemble_noise(predict_noise_set(ens, x), seed), x~ = y~ + z.
PseudoPair generate_pseudo_pair(const DenoiserState& state, const NoiseEnsemble& ens, const Tensor& x,
                                std::uint64_t seed);
// Same algebra with a given noise field.
PseudoPair make_pseudo_pair(const Tensor& y_tilde, Tensor noise);

enum class NoiseStrategy { Ensemble, Hist, Gaussian, ModelPlusHist };

std::string to_string(NoiseStrategy s);
NoiseStrategy parse_noise_strategy(const std::string& s);

// Noise for a batch of patches cut from the fine-tuning images. Any model
// predictions are computed once on the full images at construction, before
// the loop; sample() only crops and resamples.
class PseudoNoiseSource {
 public:
  virtual ~PseudoNoiseSource() = default;
  virtual Tensor sample(std::span<const PatchOrigin> origins, std::size_t patch, std::uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

std::unique_ptr<PseudoNoiseSource> make_ensemble_source(const NoiseEnsemble& ens, std::span<const Tensor> images);
// Takes precomputed per-image noise map sets (one set per fine-tuning image).
std::unique_ptr<PseudoNoiseSource> make_ensemble_source(std::vector<NoiseMapSet> maps);
std::unique_ptr<PseudoNoiseSource> make_hist_source(NoiseHistogram hist);
std::unique_ptr<PseudoNoiseSource> make_gaussian_source(double stddev = kGaussianNoiseStd);
std::unique_ptr<PseudoNoiseSource> make_model_plus_hist_source(std::vector<Tensor> model_maps, NoiseHistogram hist,
                                                               BlendWeights weights = {});

struct FinetuneConfig {
  std::size_t steps = 200;
  std::size_t batch = 16;   // K
  std::size_t patch = 64;
  LossKind loss = LossKind::L2;
  bool sync = true;
  // Stop when the smoothed step loss has not improved for this many steps
  // (0 disables). A final sync is applied when stopping early.
  std::size_t early_stop_patience = 50;
  double loss_smoothing = 0.1;  // EMA weight of the newest step loss
  // One draw per item, applied to the LDCT patch and its noise crop before
  // the pseudo pair is built, so x~ carries noise resampled like the input.
  AugmentSpec augment{};
};

struct FinetuneStepInfo {
  std::size_t step = 0;  // 1-based, equals count after the step
  double loss = 0.0;
  bool synced = false;
  const DenoiserState* state = nullptr;
  const PseudoPair* pair = nullptr;
};

struct FinetuneResult {
  DenoiserState state;
  std::vector<double> losses;
  std::vector<std::size_t> sync_steps;
  std::size_t steps_run = 0;
  bool early_stopped = false;

  // With sync the loop returns f_theta; the no-sync ablation evaluates the trainee.
  const DenoiserNet& final_model() const { return synced_output ? state.theta : state.theta_star; }
  bool synced_output = true;
};

struct FinetuneHooks {
  std::function<void(const FinetuneStepInfo&)> on_step;
  NdjsonLog* log = nullptr;
  // When set, theta is written here after every sync.
  std::filesystem::path checkpoint;
};

FinetuneResult finetune(DenoiserState state, const PseudoNoiseSource& noise, std::span<const Tensor> x_test,
                        const FinetuneConfig& config, std::uint64_t seed, const FinetuneHooks& hooks = {});

// Convenience forms following the operation signatures: ensemble noise on the
// given images.
FinetuneResult finetune(DenoiserState state, const NoiseEnsemble& ens, std::span<const Tensor> x_test,
                        std::size_t steps, LossKind loss_kind, std::uint64_t seed);
FinetuneResult finetune_no_sync(DenoiserState state, const NoiseEnsemble& ens, std::span<const Tensor> x_test,
                                std::size_t steps, std::uint64_t seed, LossKind loss_kind = LossKind::L2);

}  // namespace pct
