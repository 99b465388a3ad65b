#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pct/nn.hpp"
#include "pct/tensor.hpp"

namespace pct {

enum class InitKind { He, Zero };

struct DenoiserConfig {
  int depth = 5;       // conv stages in the encoder (the decoder mirrors it)
  int channels = 32;
  int kernel = 3;
  std::uint64_t seed = 0;

  bool operator==(const DenoiserConfig&) const = default;
};

struct NoiseNetConfig {
  int levels = 2;
  int channels = 16;
  std::uint64_t seed = 0;

  bool operator==(const NoiseNetConfig&) const = default;
};

// Residual encoder-decoder denoiser.
//
// Encoder: `depth` same-padded conv+ReLU stages (1 -> c -> ... -> c).
// Decoder: `depth - 1` conv stages, each followed by adding the mirrored
// encoder activation and a ReLU, then a final linear conv to one channel
// that is added to the network input. With all parameters zero the network
// is the identity.
class DenoiserNet {
 public:
  explicit DenoiserNet(DenoiserConfig config, InitKind init = InitKind::He);

  const DenoiserConfig& config() const { return config_; }

  Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  void copy_parameters_from(const DenoiserNet& other);
  bool same_parameters(const DenoiserNet& other) const;

  // Inputs of every ReLU as cached by the last forward().
  std::vector<const Tensor*> relu_inputs() const;

 private:
  void check_input(const Tensor& x) const;

  DenoiserConfig config_;
  std::vector<Conv2d> enc_;
  std::vector<Conv2d> dec_;  // dec_[0] is the output conv
  // Training caches.
  std::vector<Tensor> enc_pre_;
  std::vector<Tensor> dec_pre_;
};

// Encoder-decoder noise network with skip connections.
//
// Each down level halves the resolution with a stride-2 conv and doubles the
// channels; each up level is nearest upsampling + 3x3 conv, concatenation with
// the matching encoder activation, and a fusing conv. A final 1x1 conv
// produces an unbounded single-channel noise map.
class NoiseNet {
 public:
  explicit NoiseNet(NoiseNetConfig config, InitKind init = InitKind::He);

  const NoiseNetConfig& config() const { return config_; }

  Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  bool same_parameters(const NoiseNet& other) const;

  // Inputs of every ReLU as cached by the last forward().
  std::vector<const Tensor*> relu_inputs() const;

 private:
  void check_input(const Tensor& x) const;
  template <bool Train>
  Tensor run(const Tensor& x);

  NoiseNetConfig config_;
  Conv2d stem_;
  std::vector<Conv2d> down_;    // stride-2, per level
  std::vector<Conv2d> down2_;   // refine, per level
  std::vector<Conv2d> up_;      // after upsampling, per level
  std::vector<Conv2d> fuse_;    // after concatenation, per level
  Conv2d head_;
  // Training caches.
  std::vector<Tensor> pre_;
};

DenoiserNet build_denoiser(const DenoiserConfig& config, std::uint64_t seed);
NoiseNet build_noise_net(const NoiseNetConfig& config, std::uint64_t seed);

// denoise: pure inference, (n, 1, h, w) with h, w >= 16.
Tensor denoise(const DenoiserNet& net, const Tensor& x);
// predict_noise: pure inference, (n, 1, h, w) with h, w divisible by 2^levels.
Tensor predict_noise(const NoiseNet& net, const Tensor& x);

// Weight files plus a JSON sidecar at `<path>.json` holding the architecture.
void save_weights(const DenoiserNet& net, const std::filesystem::path& path);
void save_weights(const NoiseNet& net, const std::filesystem::path& path);
DenoiserNet load_denoiser(const std::filesystem::path& path);
NoiseNet load_noise_net(const std::filesystem::path& path);
// Loads into a network of the given topology; throws DataError on mismatch.
DenoiserNet load_denoiser(const std::filesystem::path& path, const DenoiserConfig& expected);
NoiseNet load_noise_net(const std::filesystem::path& path, const NoiseNetConfig& expected);

std::filesystem::path sidecar_path(const std::filesystem::path& weights);

}  // namespace pct
