#pragma once

// Finite-difference suites per layer type and per architecture, shared by the
// unit tests and the acceptance binary. Each returns the combined report.

#include <map>
#include <string>

#include "oracles.hpp"
#include "pct/networks.hpp"
#include "pct/nn.hpp"

namespace fd {

using oracle::FdReport;
using pct::Shape;
using pct::Tensor;

inline FdReport merge(const FdReport& a, const FdReport& b) {
  FdReport r;
  r.checked = a.checked + b.checked;
  r.failed = a.failed + b.failed;
  r.kinked = a.kinked + b.kinked;
  r.max_rel = std::max(a.max_rel, b.max_rel);
  return r;
}

inline void randomize(pct::Conv2d& conv, std::uint64_t seed) {
  conv.weight().value = oracle::random_tensor(Shape{1, 1, 1, conv.weight().size()}, seed, -0.5f, 0.5f).vec();
  conv.bias().value = oracle::random_tensor(Shape{1, 1, 1, conv.bias().size()}, seed + 1, -0.2f, 0.2f).vec();
}

// Input, weight and bias gradients of <r, conv(x)>.
inline FdReport conv_case(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad,
                          std::size_t hw, std::uint64_t seed) {
  pct::Conv2d conv("c", cin, cout, k, stride, pad);
  randomize(conv, seed);
  Tensor x = oracle::random_tensor(Shape{2, cin, hw, hw}, seed + 2);
  const Tensor r = oracle::random_tensor(conv.output_shape(x.shape()), seed + 3);
  conv.forward(x);
  const Tensor gx = conv.backward(r);

  std::vector<float*> coords;
  std::vector<double> analytic;
  for (std::size_t i : oracle::pick(x.size(), 40, seed + 4)) {
    coords.push_back(&x[i]);
    analytic.push_back(gx[i]);
  }
  for (std::size_t i : oracle::pick(conv.weight().size(), 50, seed + 5)) {
    coords.push_back(&conv.weight().value[i]);
    analytic.push_back(conv.weight().grad[i]);
  }
  for (std::size_t i = 0; i < conv.bias().size(); ++i) {
    coords.push_back(&conv.bias().value[i]);
    analytic.push_back(conv.bias().grad[i]);
  }
  return oracle::fd_check(coords, analytic, [&] { return oracle::dot(r, conv.infer(x)); });
}

// Three stride/padding variants.
inline FdReport conv() {
  return merge(merge(conv_case(2, 3, 3, 1, 1, 6, 100), conv_case(3, 4, 3, 2, 1, 8, 200)),
               conv_case(4, 2, 1, 1, 0, 5, 300));
}

// Inputs pushed at least 0.1 away from the kink.
inline FdReport relu() {
  Tensor x = oracle::random_tensor(Shape{1, 2, 8, 8}, 21);
  for (auto& v : x.values()) v += v >= 0 ? 0.1f : -0.1f;
  const Tensor r = oracle::random_tensor(x.shape(), 22);
  const Tensor g = pct::relu_backward(r, x);
  std::vector<float*> coords;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < x.size(); ++i) {
    coords.push_back(&x[i]);
    analytic.push_back(g[i]);
  }
  return oracle::fd_check(coords, analytic, [&] { return oracle::dot(r, pct::relu(x)); });
}

inline FdReport upsample() {
  Tensor x = oracle::random_tensor(Shape{2, 2, 6, 5}, 31);
  const Tensor r = oracle::random_tensor(Shape{2, 2, 12, 10}, 32);
  const Tensor g = pct::upsample_nearest_backward(r, 2);
  std::vector<float*> coords;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < x.size(); ++i) {
    coords.push_back(&x[i]);
    analytic.push_back(g[i]);
  }
  return oracle::fd_check(coords, analytic, [&] { return oracle::dot(r, pct::upsample_nearest(x, 2)); });
}

inline FdReport concat() {
  Tensor x = oracle::random_tensor(Shape{2, 3, 4, 4}, 43);
  Tensor y = oracle::random_tensor(Shape{2, 2, 4, 4}, 44);
  const Tensor r = oracle::random_tensor(Shape{2, 5, 4, 4}, 45);
  const auto [gx, gy] = pct::split_channels(r, 3);
  std::vector<float*> coords;
  std::vector<double> analytic;
  for (std::size_t i : oracle::pick(x.size(), 60, 46)) {
    coords.push_back(&x[i]);
    analytic.push_back(gx[i]);
  }
  for (std::size_t i : oracle::pick(y.size(), 40, 47)) {
    coords.push_back(&y[i]);
    analytic.push_back(gy[i]);
  }
  return oracle::fd_check(coords, analytic, [&] { return oracle::dot(r, pct::concat_channels(x, y)); });
}

// Every |p - t| kept 0.05 clear of the L1 kink. With a mask, only masked
// positions carry gradient.
inline FdReport loss(pct::LossKind kind, bool masked = false) {
  Tensor p = oracle::random_tensor(Shape{2, 1, 8, 8}, 51);
  const Tensor t = oracle::random_tensor(Shape{2, 1, 8, 8}, 52);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (std::abs(p[i] - t[i]) < 0.05f) p[i] = t[i] + 0.1f;
  }
  Tensor mask(p.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (!masked || i % 3 == 0) ? 1.0f : 0.0f;
  auto eval = [&] { return masked ? pct::masked_loss(kind, p, t, mask) : pct::loss(kind, p, t); };
  const auto r = eval();
  std::vector<float*> coords;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < p.size(); ++i) {
    coords.push_back(&p[i]);
    analytic.push_back(r.grad[i]);
  }
  return oracle::fd_check(coords, analytic, [&] { return eval().value; });
}

inline FdReport denoiser() {
  pct::DenoiserNet net = pct::build_denoiser(pct::DenoiserConfig{2, 4, 3}, 11);
  const Tensor x = oracle::random_tensor(Shape{1, 1, 16, 16}, 12, 0.0f, 1.0f);
  const Tensor r = oracle::random_tensor(x.shape(), 13);
  return oracle::denoiser_fd(net, x, r, oracle::linear_probe(r), 120, 14);
}

inline FdReport denoiser_mse() {
  pct::DenoiserNet net = pct::build_denoiser(pct::DenoiserConfig{2, 4, 3}, 21);
  const Tensor x = oracle::random_tensor(Shape{1, 1, 16, 16}, 22, 0.0f, 1.0f);
  const Tensor y = oracle::random_tensor(x.shape(), 23, 0.0f, 1.0f);
  net.zero_grad();
  const auto l = pct::mse_loss(net.forward(x), y);
  return oracle::denoiser_fd(net, x, l.grad, oracle::mse_probe(y), 100, 24);
}

inline FdReport noise_net() {
  pct::NoiseNet net = pct::build_noise_net(pct::NoiseNetConfig{2, 2}, 31);
  const Tensor x = oracle::random_tensor(Shape{1, 1, 16, 16}, 32, 0.0f, 1.0f);
  const Tensor r = oracle::random_tensor(x.shape(), 33);
  return oracle::noise_net_fd(net, x, r, 120, 34);
}

// Every suite by name.
inline std::map<std::string, FdReport> all() {
  return {{"conv2d", conv()},
          {"relu", relu()},
          {"upsample", upsample()},
          {"concat/split", concat()},
          {"l1", loss(pct::LossKind::L1)},
          {"mse", loss(pct::LossKind::L2)},
          {"masked l1", loss(pct::LossKind::L1, true)},
          {"denoiser", denoiser()},
          {"denoiser+mse", denoiser_mse()},
          {"noise net", noise_net()}};
}

}  // namespace fd
