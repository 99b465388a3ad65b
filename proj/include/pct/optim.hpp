#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pct/nn.hpp"

namespace pct {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers mirror the parameter list given
// at construction; the parameters themselves are not owned.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig config);

  // Applies one update using each parameter's current grad. Throws
  // NumericError naming the offending block if any gradient is non-finite;
  // in that case no parameter is modified.
  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::uint64_t t_ = 0;
};

struct PlateauConfig {
  double initial_lr = 1e-4;
  double factor = 0.5;
  int patience = 5;
  double min_lr = 1e-6;
  // Relative improvement needed to reset the counter.
  double threshold = 0.0;
};

// Reduce-on-plateau: multiplies the LR by `factor` once `patience`
// consecutive epochs pass without improving on the best loss.
class PlateauScheduler {
 public:
  PlateauScheduler() : PlateauScheduler(PlateauConfig{}) {}
  explicit PlateauScheduler(PlateauConfig config);

  // Records one epoch loss and returns the LR to use next.
  double step(double epoch_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }
  int reductions() const { return reductions_; }

 private:
  PlateauConfig config_;
  double lr_;
  double best_;
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

}  // namespace pct
