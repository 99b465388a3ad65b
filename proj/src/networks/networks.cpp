#include "pct/networks.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pct/errors.hpp"
#include "pct/rng.hpp"
#include "pct/weights_io.hpp"

namespace pct {

namespace {

// The linear output conv starts near zero so a fresh denoiser is close to the
// identity (and a fresh noise net close to zero) instead of adding He-scale
// garbage to the residual. Training converges much faster from there.
constexpr double kOutputInitScale = 0.01;

void init_conv(Conv2d& conv, InitKind init, Rng& rng, double scale = 1.0) {
  auto& w = conv.weight().value;
  auto& b = conv.bias().value;
  std::fill(b.begin(), b.end(), 0.0f);
  if (init == InitKind::Zero) {
    std::fill(w.begin(), w.end(), 0.0f);
    return;
  }
  const double fan_in = static_cast<double>(conv.in_channels() * conv.kernel() * conv.kernel());
  const double stddev = scale * std::sqrt(2.0 / fan_in);
  for (auto& v : w) v = static_cast<float>(stddev * standard_normal(rng));
}

template <class Params>
std::size_t count_params(const Params& params) {
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  return total;
}

template <class A, class B>
bool params_equal(const A& a, const B& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->dims != b[i]->dims || a[i]->value != b[i]->value) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// DenoiserNet
// ---------------------------------------------------------------------------

DenoiserNet::DenoiserNet(DenoiserConfig config, InitKind init) : config_(config) {
  if (config.depth < 2) throw ConfigError("denoiser depth must be >= 2, got " + std::to_string(config.depth));
  if (config.channels < 1) throw ConfigError("denoiser channels must be >= 1");
  if (config.kernel < 1 || config.kernel % 2 == 0) throw ConfigError("denoiser kernel must be odd and positive");
  const auto c = static_cast<std::size_t>(config.channels);
  const auto k = static_cast<std::size_t>(config.kernel);
  const std::size_t pad = k / 2;
  const auto d = static_cast<std::size_t>(config.depth);
  for (std::size_t i = 0; i < d; ++i) {
    enc_.emplace_back("enc" + std::to_string(i + 1), i == 0 ? 1 : c, c, k, 1, pad);
  }
  for (std::size_t j = 0; j < d; ++j) {
    dec_.emplace_back("dec" + std::to_string(j), c, j == 0 ? 1 : c, k, 1, pad);
  }
  Rng rng(config.seed);
  for (auto& conv : enc_) init_conv(conv, init, rng);
  for (std::size_t j = d; j-- > 0;) init_conv(dec_[j], init, rng, j == 0 ? kOutputInitScale : 1.0);
}

void DenoiserNet::check_input(const Tensor& x) const {
  const Shape s = x.shape();
  if (s.c != 1 || s.h < 16 || s.w < 16) {
    throw ShapeError("denoiser expects (n,1,h,w) with h,w >= 16, got " + s.str());
  }
}

Tensor DenoiserNet::infer(const Tensor& x) const {
  check_input(x);
  const std::size_t d = enc_.size();
  std::vector<Tensor> acts;
  acts.reserve(d);
  Tensor h = x;
  for (std::size_t i = 0; i < d; ++i) {
    h = relu(enc_[i].infer(h));
    acts.push_back(h);
  }
  for (std::size_t j = d - 1; j >= 1; --j) {
    Tensor pre = dec_[j].infer(h);
    pre += acts[j - 1];
    h = relu(pre);
  }
  Tensor out = dec_[0].infer(h);
  out += x;
  return out;
}

Tensor DenoiserNet::forward(const Tensor& x) {
  check_input(x);
  const std::size_t d = enc_.size();
  enc_pre_.assign(d, Tensor{});
  dec_pre_.assign(d, Tensor{});
  std::vector<Tensor> acts;
  acts.reserve(d);
  Tensor h = x;
  for (std::size_t i = 0; i < d; ++i) {
    enc_pre_[i] = enc_[i].forward(h);
    h = relu(enc_pre_[i]);
    acts.push_back(h);
  }
  for (std::size_t j = d - 1; j >= 1; --j) {
    Tensor pre = dec_[j].forward(h);
    pre += acts[j - 1];
    dec_pre_[j] = pre;
    h = relu(pre);
  }
  Tensor out = dec_[0].forward(h);
  out += x;
  return out;
}

Tensor DenoiserNet::backward(const Tensor& grad_out) {
  if (enc_pre_.empty()) throw StateError("denoiser: backward called before forward");
  const std::size_t d = enc_.size();
  // Gradients arriving at encoder activation i via the decoder shortcuts.
  std::vector<Tensor> skip_grad(d);
  Tensor g = dec_[0].backward(grad_out);
  for (std::size_t j = 1; j < d; ++j) {
    Tensor gpre = relu_backward(g, dec_pre_[j]);
    skip_grad[j - 1] = gpre;
    g = dec_[j].backward(gpre);
  }
  for (std::size_t i = d; i-- > 0;) {
    if (!skip_grad[i].empty()) g += skip_grad[i];
    g = enc_[i].backward(relu_backward(g, enc_pre_[i]));
  }
  g += grad_out;
  return g;
}

std::vector<const Tensor*> DenoiserNet::relu_inputs() const {
  std::vector<const Tensor*> out;
  for (const auto& t : enc_pre_) out.push_back(&t);
  for (std::size_t j = 1; j < dec_pre_.size(); ++j) out.push_back(&dec_pre_[j]);
  return out;
}

std::vector<Parameter*> DenoiserNet::parameters() {
  std::vector<Parameter*> out;
  for (auto& conv : enc_) {
    out.push_back(&conv.weight());
    out.push_back(&conv.bias());
  }
  for (std::size_t j = dec_.size(); j-- > 0;) {
    out.push_back(&dec_[j].weight());
    out.push_back(&dec_[j].bias());
  }
  return out;
}

std::vector<const Parameter*> DenoiserNet::parameters() const {
  auto ps = const_cast<DenoiserNet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t DenoiserNet::parameter_count() const { return count_params(parameters()); }

void DenoiserNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void DenoiserNet::copy_parameters_from(const DenoiserNet& other) {
  if (!(other.config_.depth == config_.depth && other.config_.channels == config_.channels &&
        other.config_.kernel == config_.kernel)) {
    throw ShapeError("denoiser parameter copy between different topologies");
  }
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

bool DenoiserNet::same_parameters(const DenoiserNet& other) const {
  return params_equal(parameters(), other.parameters());
}

// ---------------------------------------------------------------------------
// NoiseNet
// ---------------------------------------------------------------------------

NoiseNet::NoiseNet(NoiseNetConfig config, InitKind init) : config_(config) {
  if (config.levels < 1) throw ConfigError("noise net levels must be >= 1");
  if (config.channels < 1) throw ConfigError("noise net channels must be >= 1");
  const auto c = static_cast<std::size_t>(config.channels);
  const auto levels = static_cast<std::size_t>(config.levels);
  stem_ = Conv2d("stem", 1, c, 3, 1, 1);
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t lo = c << l;
    const std::size_t hi = c << (l + 1);
    const std::string tag = std::to_string(l + 1);
    down_.emplace_back("down" + tag, lo, hi, 3, 2, 1);
    down2_.emplace_back("down" + tag + "b", hi, hi, 3, 1, 1);
    up_.emplace_back("up" + tag, hi, lo, 3, 1, 1);
    fuse_.emplace_back("fuse" + tag, 2 * lo, lo, 3, 1, 1);
  }
  head_ = Conv2d("head", c, 1, 1, 1, 0);
  Rng rng(config.seed);
  init_conv(stem_, init, rng);
  for (std::size_t l = 0; l < levels; ++l) {
    init_conv(down_[l], init, rng);
    init_conv(down2_[l], init, rng);
  }
  for (std::size_t l = levels; l-- > 0;) {
    init_conv(up_[l], init, rng);
    init_conv(fuse_[l], init, rng);
  }
  init_conv(head_, init, rng, kOutputInitScale);
}

void NoiseNet::check_input(const Tensor& x) const {
  const Shape s = x.shape();
  const std::size_t div = std::size_t{1} << config_.levels;
  if (s.c != 1) throw ShapeError("noise net expects a single-channel input, got " + s.str());
  if (s.h == 0 || s.w == 0 || s.h % div != 0 || s.w % div != 0) {
    throw ShapeError("noise net input " + s.str() + " must have height and width divisible by " +
                     std::to_string(div) + "; pad the image first");
  }
}

// Pre-activation cache layout: [stem, (down, down2) per level, (up, fuse) per level in decoder order].
template <bool Train>
Tensor NoiseNet::run(const Tensor& x) {
  check_input(x);
  const std::size_t levels = down_.size();
  auto apply = [this](Conv2d& conv, const Tensor& in) {
    if constexpr (Train) {
      Tensor p = conv.forward(in);
      pre_.push_back(p);
      return p;
    } else {
      return conv.infer(in);
    }
  };
  if constexpr (Train) pre_.clear();
  std::vector<Tensor> skips;
  Tensor a = relu(apply(stem_, x));
  for (std::size_t l = 0; l < levels; ++l) {
    skips.push_back(a);
    a = relu(apply(down_[l], a));
    a = relu(apply(down2_[l], a));
  }
  for (std::size_t l = levels; l-- > 0;) {
    a = relu(apply(up_[l], upsample_nearest(a, 2)));
    a = relu(apply(fuse_[l], concat_channels(a, skips[l])));
  }
  if constexpr (Train) {
    return head_.forward(a);
  } else {
    return head_.infer(a);
  }
}

Tensor NoiseNet::infer(const Tensor& x) const { return const_cast<NoiseNet*>(this)->run<false>(x); }

Tensor NoiseNet::forward(const Tensor& x) { return run<true>(x); }

Tensor NoiseNet::backward(const Tensor& grad_out) {
  const std::size_t levels = down_.size();
  if (pre_.size() != 1 + 4 * levels) throw StateError("noise net: backward called before forward");
  std::vector<Tensor> skip_grad(levels);
  Tensor g = head_.backward(grad_out);
  std::size_t idx = pre_.size();
  for (std::size_t l = 0; l < levels; ++l) {
    g = fuse_[l].backward(relu_backward(g, pre_[--idx]));
    auto [g_up, g_skip] = split_channels(g, up_[l].out_channels());
    skip_grad[l] = std::move(g_skip);
    g = up_[l].backward(relu_backward(g_up, pre_[--idx]));
    g = upsample_nearest_backward(g, 2);
  }
  for (std::size_t l = levels; l-- > 0;) {
    g = down2_[l].backward(relu_backward(g, pre_[--idx]));
    g = down_[l].backward(relu_backward(g, pre_[--idx]));
    g += skip_grad[l];
  }
  return stem_.backward(relu_backward(g, pre_[--idx]));
}

std::vector<const Tensor*> NoiseNet::relu_inputs() const {
  std::vector<const Tensor*> out;
  for (const auto& t : pre_) out.push_back(&t);
  return out;
}

std::vector<Parameter*> NoiseNet::parameters() {
  std::vector<Parameter*> out;
  auto add = [&out](Conv2d& conv) {
    out.push_back(&conv.weight());
    out.push_back(&conv.bias());
  };
  add(stem_);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    add(down_[l]);
    add(down2_[l]);
  }
  for (std::size_t l = up_.size(); l-- > 0;) {
    add(up_[l]);
    add(fuse_[l]);
  }
  add(head_);
  return out;
}

std::vector<const Parameter*> NoiseNet::parameters() const {
  auto ps = const_cast<NoiseNet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t NoiseNet::parameter_count() const { return count_params(parameters()); }

void NoiseNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

bool NoiseNet::same_parameters(const NoiseNet& other) const {
  return params_equal(parameters(), other.parameters());
}

// ---------------------------------------------------------------------------
// Builders, inference and persistence
// ---------------------------------------------------------------------------

DenoiserNet build_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  DenoiserConfig c = config;
  c.seed = seed;
  return DenoiserNet(c, InitKind::He);
}

NoiseNet build_noise_net(const NoiseNetConfig& config, std::uint64_t seed) {
  NoiseNetConfig c = config;
  c.seed = seed;
  return NoiseNet(c, InitKind::He);
}

Tensor denoise(const DenoiserNet& net, const Tensor& x) { return net.infer(x); }

Tensor predict_noise(const NoiseNet& net, const Tensor& x) { return net.infer(x); }

std::filesystem::path sidecar_path(const std::filesystem::path& weights) {
  return std::filesystem::path(weights.string() + ".json");
}

namespace {

using nlohmann::json;

template <class Net>
void write_net(const Net& net, const std::filesystem::path& path, const json& arch) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto params = const_cast<Net&>(net).parameters();
  write_weight_file(path, snapshot(params));
  std::ofstream f(sidecar_path(path));
  if (!f) throw DataError("cannot write sidecar " + sidecar_path(path).string());
  f << arch.dump(2) << "\n";
}

json read_sidecar(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream f(sidecar_path(path));
  if (!f) throw DataError("missing architecture sidecar " + sidecar_path(path).string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
  if (j.value("kind", "") != expected_kind) {
    throw DataError("sidecar " + sidecar_path(path).string() + " describes a '" + j.value("kind", "?") +
                    "', expected '" + expected_kind + "'");
  }
  return j;
}

template <class Net>
Net restore_net(Net net, const std::filesystem::path& path) {
  const auto entries = read_weight_file(path);
  auto params = net.parameters();
  restore(params, entries);
  return net;
}

}  // namespace

void save_weights(const DenoiserNet& net, const std::filesystem::path& path) {
  const auto& c = net.config();
  write_net(net, path,
            json{{"kind", "denoiser"}, {"depth", c.depth}, {"channels", c.channels}, {"kernel", c.kernel},
                 {"seed", c.seed}});
}

void save_weights(const NoiseNet& net, const std::filesystem::path& path) {
  const auto& c = net.config();
  write_net(net, path, json{{"kind", "noise_net"}, {"levels", c.levels}, {"channels", c.channels}, {"seed", c.seed}});
}

DenoiserNet load_denoiser(const std::filesystem::path& path) {
  const json j = read_sidecar(path, "denoiser");
  DenoiserConfig c;
  c.depth = j.at("depth").get<int>();
  c.channels = j.at("channels").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return restore_net(DenoiserNet(c, InitKind::Zero), path);
}

NoiseNet load_noise_net(const std::filesystem::path& path) {
  const json j = read_sidecar(path, "noise_net");
  NoiseNetConfig c;
  c.levels = j.at("levels").get<int>();
  c.channels = j.at("channels").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return restore_net(NoiseNet(c, InitKind::Zero), path);
}

DenoiserNet load_denoiser(const std::filesystem::path& path, const DenoiserConfig& expected) {
  return restore_net(DenoiserNet(expected, InitKind::Zero), path);
}

NoiseNet load_noise_net(const std::filesystem::path& path, const NoiseNetConfig& expected) {
  return restore_net(NoiseNet(expected, InitKind::Zero), path);
}

}  // namespace pct
