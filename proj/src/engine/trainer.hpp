#pragma once

// Shared mini-batch training loop for the denoiser schemes and the noise
// networks. Header-only because it is templated on the network type.

#include <cmath>
#include <string>

#include "pct/errors.hpp"
#include "pct/rng.hpp"
#include "pct/training.hpp"

namespace pct::detail {

struct TrainBatch {
  Tensor input;
  Tensor target;
  Tensor mask;  // empty unless the loss is restricted to some pixels
};

inline LossResult batch_loss(LossKind kind, const Tensor& pred, const TrainBatch& b) {
  return b.mask.empty() ? loss(kind, pred, b.target) : masked_loss(kind, pred, b.target, b.mask);
}

// make_batch(seed) -> TrainBatch. Step i uses derive_seed(seed, i); the probe
// batch uses a stream no step can reach.
template <class Net, class MakeBatch>
TrainHistory run_training(Net& net, const TrainConfig& cfg, std::uint64_t seed, MakeBatch&& make_batch,
                          NdjsonLog* log, const std::string& tag) {
  if (cfg.steps > 0 && cfg.epoch_steps == 0) throw ConfigError(tag + ": epoch_steps must be positive");
  TrainHistory hist;
  const TrainBatch probe = make_batch(derive_seed(seed, 0xFFFF'FFFF'0000'0001ull));
  hist.initial_probe_loss = batch_loss(cfg.loss, net.infer(probe.input), probe).value;

  Adam adam(net.parameters(), cfg.adam);
  PlateauConfig pc;
  pc.initial_lr = cfg.adam.lr;
  pc.patience = cfg.plateau_patience;
  pc.min_lr = cfg.min_lr;
  PlateauScheduler sched(pc);

  double epoch_sum = 0.0;
  std::size_t epoch_count = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const TrainBatch b = make_batch(derive_seed(seed, step));
    net.zero_grad();
    const Tensor pred = net.forward(b.input);
    const LossResult l = batch_loss(cfg.loss, pred, b);
    if (!std::isfinite(l.value)) {
      throw NumericError(tag + ": non-finite loss at step " + std::to_string(step));
    }
    net.backward(l.grad);
    adam.step();
    hist.step_losses.push_back(l.value);
    epoch_sum += l.value;
    ++epoch_count;
    if (epoch_count == cfg.epoch_steps || step + 1 == cfg.steps) {
      const double epoch_loss = epoch_sum / static_cast<double>(epoch_count);
      hist.epoch_losses.push_back(epoch_loss);
      hist.epoch_lrs.push_back(adam.lr());
      adam.set_lr(sched.step(epoch_loss));
      if (log != nullptr) {
        log->write({{"stage", tag},
                    {"epoch", hist.epoch_losses.size() - 1},
                    {"step", step + 1},
                    {"loss", epoch_loss},
                    {"lr", hist.epoch_lrs.back()}});
      }
      epoch_sum = 0.0;
      epoch_count = 0;
    }
  }
  hist.final_probe_loss = batch_loss(cfg.loss, net.infer(probe.input), probe).value;
  return hist;
}

}  // namespace pct::detail
