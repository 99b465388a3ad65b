#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pct/dataset.hpp"
#include "pct/metrics.hpp"
#include "pct/networks.hpp"
#include "pct/noise.hpp"
#include "pct/selfsup.hpp"

namespace pct {

enum class FinetuneGranularity { Pooled, PerSubject };

struct FinetuneSettings {
  FinetuneConfig loop{};
  std::size_t update_period = 10;
  double lr = 1e-4;
  FinetuneGranularity granularity = FinetuneGranularity::Pooled;
};

// Everything a run depends on. Serialized next to every output so a run can
// be repeated exactly.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "pct_run";
  std::filesystem::path dataset;  // empty: synthesize into <output>/dataset
  SynthSpec synth{};              // synth.seed is always taken from `seed`
  std::size_t n_train = 3;
  std::size_t n_test = 7;
  DenoiserConfig denoiser{};
  NoiseNetConfig noise_net{};
  TrainConfig pretrain{};
  TrainConfig noise_training{};
  std::vector<SchemeKind> schemes{SchemeKind::N2C, SchemeKind::N2N, SchemeKind::N2V};
  double n2v_fraction = 0.008;
  int n2v_window = 5;
  std::vector<NoiseStrategy> strategies{NoiseStrategy::Ensemble, NoiseStrategy::Hist, NoiseStrategy::Gaussian,
                                        NoiseStrategy::ModelPlusHist};
  bool no_sync_ablation = true;
  FinetuneSettings finetune{};
  BlendWeights model_plus_hist{};
  double gaussian_std = kGaussianNoiseStd;
  bool save_images = true;
  bool force = false;  // allow writing into a non-empty dataset directory
};

// Desk defaults; see README for how they relate to the larger settings.
RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected (ConfigError).
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = default_run_config());
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

// Row labels used in reports.
inline constexpr const char* kInputRow = "LDCT input";
std::string method_label(SchemeKind scheme, const std::string& suffix = "");

// ---------------------------------------------------------------------------
// Stages. Each writes under config.output and logs progress to stderr.
// ---------------------------------------------------------------------------

Dataset stage_dataset(const RunConfig& c);
DatasetSplit stage_split(const RunConfig& c, const Dataset& ds);
NoiseEnsemble stage_train_noise(const RunConfig& c, const Dataset& ds, const DatasetSplit& split);
DenoiserNet stage_pretrain(const RunConfig& c, const Dataset& ds, const DatasetSplit& split, SchemeKind scheme);

struct TestSet {
  std::vector<Tensor> ldct;
  std::vector<Tensor> ndct;
  std::vector<std::string> subject;  // per image
};
TestSet make_test_set(const Dataset& ds, const DatasetSplit& split);
std::vector<Tensor> train_noise_maps(const Dataset& ds, const DatasetSplit& split);

struct FinetuneRun {
  std::vector<Tensor> outputs;  // final model applied to every test image
  std::vector<FinetuneResult> results;  // one per fine-tuning group
};

// Fine-tunes `pretrained` on the test LDCT images with one noise strategy
// (pooled or per subject) and denoises the test set with the final model.
FinetuneRun stage_finetune(const RunConfig& c, const DenoiserNet& pretrained, const TestSet& test,
                           NoiseStrategy strategy, bool sync,
                           const std::vector<NoiseMapSet>& test_maps, const NoiseHistogram& hist,
                           std::uint64_t seed, const std::filesystem::path& log_dir);

std::vector<Tensor> denoise_all(const DenoiserNet& net, const std::vector<Tensor>& images);

struct PipelineResult {
  EvalReport report;
  std::map<std::string, std::vector<Tensor>> outputs;
};

PipelineResult run_pipeline(const RunConfig& c);

}  // namespace pct
