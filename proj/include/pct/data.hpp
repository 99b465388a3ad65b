#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pct/rng.hpp"
#include "pct/tensor.hpp"

namespace pct {

enum class Dose { Low, Normal };
enum class SliceSource { RawFile, Synthetic };

std::string to_string(Dose d);

// One 2-D CT image in normalized [0, 1] intensity units.
struct CtSlice {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // row-major
  std::string subject_id;
  Dose dose = Dose::Normal;
  SliceSource source = SliceSource::Synthetic;

  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  // (1, 1, h, w) view copy.
  Tensor tensor() const;
  static CtSlice from_tensor(const Tensor& t, std::string subject_id, Dose dose, SliceSource source);
};

// Linear HU display window mapped onto [0, 1].
struct HuWindow {
  double center = 40.0;
  double width = 400.0;

  double lower() const { return center - width / 2.0; }
  // Clamped to [0, 1].
  double normalize(double hu) const;
  double to_hu(double normalized) const;
};

struct RawEncoding {
  double slope = 1.0;
  double intercept = -1024.0;
  HuWindow window{};
};

// Little-endian u16 slices: HU = raw * slope + intercept, then windowed.
CtSlice load_raw_slice(const std::filesystem::path& path, std::size_t width, std::size_t height,
                       const RawEncoding& enc = {}, std::string subject_id = {}, Dose dose = Dose::Low);
// Inverse of load_raw_slice; raw values are rounded to nearest and clamped to u16.
void write_raw_slice(const std::filesystem::path& path, const CtSlice& slice, const RawEncoding& enc = {});
// What a slice looks like after a write/load round trip.
CtSlice quantize(const CtSlice& slice, const RawEncoding& enc = {});

// Binary PGM (P5) with maxval 65535, big-endian samples, [0,1] -> [0,65535].
void write_pgm(const std::filesystem::path& path, const CtSlice& slice);
void write_pgm(const std::filesystem::path& path, const Tensor& image, float lo = 0.0f, float hi = 1.0f);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Deterministic abdominal-like phantom: 5-12 ellipses on a soft-tissue
// background. size >= 32 and divisible by 4.
CtSlice synth_phantom(std::uint64_t seed, std::size_t size);

struct LdctNoiseSpec {
  double sigma0 = 0.06;          // white-noise scale before smoothing
  double streak_amplitude = 0.5; // relative to the local noise std

  bool operator==(const LdctNoiseSpec&) const = default;
};

// Per-subject streak character derived from the subject seed.
struct StreakParams {
  double angle = 0.0;  // radians in [0, pi): direction the streaks run along
  double amplitude = 0.0;
  double period = 0.0; // correlation length across the streaks, pixels
};

StreakParams streak_params(std::uint64_t subject_seed, const LdctNoiseSpec& spec = {});

// Adds spatially correlated, signal-dependent noise plus subject-specific
// directional streaks. `realization_seed` selects the noise draw; two calls
// with the same arguments give the same image. dose_factor in (0, 1].
CtSlice synth_ldct(const CtSlice& ndct, double dose_factor, std::uint64_t subject_seed,
                   std::uint64_t realization_seed, const LdctNoiseSpec& spec = {});

// The fixed 5x5 smoothing kernel (unit L2 norm) applied to the white noise.
const std::array<float, 25>& ldct_smoothing_kernel();

// ---------------------------------------------------------------------------
// Patches and augmentation
// ---------------------------------------------------------------------------

struct PatchOrigin {
  std::size_t slice = 0;
  std::size_t y = 0;
  std::size_t x = 0;
};

struct PatchBatch {
  Tensor x;  // (K, 1, p, p)
  Tensor y;  // (K, 1, p, p), same crop windows as x
  std::vector<PatchOrigin> origins;
};

// K aligned random crops from one slice pair.
PatchBatch sample_patches(const CtSlice& x, const CtSlice& y, std::size_t k, std::size_t patch, std::uint64_t seed);
// K aligned random crops; each item first picks a pair uniformly. Works on
// (1,1,h,w) tensors so derived images (pseudo pairs) can be sampled too.
PatchBatch sample_patches(std::span<const Tensor> xs, std::span<const Tensor> ys, std::size_t k, std::size_t patch,
                          std::uint64_t seed);
// Disjoint tiles covering the slice in row-major order (partial tiles dropped).
PatchBatch grid_patches(const CtSlice& x, const CtSlice& y, std::size_t patch);

struct AugmentSpec {
  double min_scale = 0.5;
  double max_scale = 2.0;
  bool horizontal_flip = true;
  bool vertical_flip = true;
  bool enabled = true;
};

struct AugmentDraw {
  double scale = 1.0;
  bool hflip = false;
  bool vflip = false;
};

// Bilinear rescale (pixel-center aligned), then center-crop or reflect-pad
// back to the original size, then flips. Scale 1 without flips is a bit-exact
// identity.
Tensor apply_augment(const Tensor& patch, const AugmentDraw& draw);
// Rescaled side length before crop/pad; throws if it would drop below 8.
std::size_t rescaled_extent(std::size_t extent, double scale);
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);
Tensor reflect_pad_to(const Tensor& image, std::size_t out_h, std::size_t out_w);
Tensor center_crop_to(const Tensor& image, std::size_t out_h, std::size_t out_w);

AugmentDraw draw_augment(const AugmentSpec& spec, Rng& rng);
// One draw per item, applied identically to the x and y members.
PatchBatch augment(const PatchBatch& batch, const AugmentSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;
};

DatasetSplit make_split(std::span<const std::string> subjects, std::size_t n_train, std::size_t n_test,
                        std::uint64_t seed);

}  // namespace pct
