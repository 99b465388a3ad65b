#include "pct/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pct/errors.hpp"

namespace pct {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  for (const Parameter* p : params_) {
    for (float g : p->grad) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter block '" + p->name + "'");
    }
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float step_size = static_cast<float>(config_.lr / corr1);
  const float inv_sqrt_corr2 = static_cast<float>(1.0 / std::sqrt(corr2));
  const float eps = static_cast<float>(config_.eps);
  const float fb1 = static_cast<float>(b1);
  const float fb2 = static_cast<float>(b2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float g = p.grad[i];
      m[i] = fb1 * m[i] + (1.0f - fb1) * g;
      v[i] = fb2 * v[i] + (1.0f - fb2) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_corr2 + eps);
    }
  }
}

PlateauScheduler::PlateauScheduler(PlateauConfig config)
    : config_(config), lr_(config.initial_lr), best_(std::numeric_limits<double>::infinity()) {
  if (config_.patience < 1) throw ConfigError("plateau scheduler: patience must be >= 1");
  if (!(config_.factor > 0.0 && config_.factor < 1.0)) throw ConfigError("plateau scheduler: factor must be in (0,1)");
}

double PlateauScheduler::step(double epoch_loss) {
  if (epoch_loss < best_ * (1.0 - config_.threshold) || best_ == std::numeric_limits<double>::infinity()) {
    if (epoch_loss < best_) best_ = epoch_loss;
    bad_epochs_ = 0;
    return lr_;
  }
  ++bad_epochs_;
  if (bad_epochs_ >= config_.patience) {
    const double next = std::max(lr_ * config_.factor, config_.min_lr);
    if (next < lr_) {
      lr_ = next;
      ++reductions_;
    }
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace pct
