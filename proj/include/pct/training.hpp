#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pct/data.hpp"
#include "pct/nn.hpp"
#include "pct/optim.hpp"

namespace pct {

// Settings shared by denoiser pre-training and noise-model training.
struct TrainConfig {
  std::size_t steps = 300;
  std::size_t batch = 8;
  std::size_t patch = 64;
  // Steps per scheduler "epoch"; the plateau scheduler sees the epoch mean loss.
  std::size_t epoch_steps = 20;
  AdamConfig adam{};
  int plateau_patience = 5;
  double min_lr = 1e-6;
  AugmentSpec augment{};
  LossKind loss = LossKind::L1;
};

struct TrainHistory {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
  std::vector<double> epoch_lrs;  // LR in effect during each epoch
  // Loss on a fixed probe batch before the first and after the last step.
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
};

// Append-only newline-delimited JSON writer. A default-constructed log
// discards everything.
class NdjsonLog {
 public:
  NdjsonLog() = default;
  explicit NdjsonLog(const std::filesystem::path& path);

  bool enabled() const { return out_.has_value(); }
  void write(const nlohmann::json& record);

 private:
  std::optional<std::ofstream> out_;
};

}  // namespace pct
