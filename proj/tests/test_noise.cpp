#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pct/errors.hpp"
#include "pct/noise.hpp"
#include "temp_dir.hpp"

using namespace pct;

namespace {

Tensor constant(const Shape& s, float v) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = v;
  return t;
}

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (float v : t.vec()) s += v;
  return s / static_cast<double>(t.size());
}

double std_of(const Tensor& t) {
  const double m = mean_of(t);
  double s = 0.0;
  for (float v : t.vec()) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(t.size()));
}

// Pearson correlation of horizontally adjacent values.
double horizontal_corr(const std::vector<double>& v, std::size_t w) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0, n = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if ((i + 1) % w == 0) continue;
    sa += v[i], sb += v[i + 1], saa += v[i] * v[i], sbb += v[i + 1] * v[i + 1], sab += v[i] * v[i + 1], n += 1;
  }
  const double cov = sab / n - sa / n * sb / n;
  return cov / std::sqrt((saa / n - sa / n * sa / n) * (sbb / n - sb / n * sb / n));
}

std::vector<double> to_double(const Tensor& t) { return {t.vec().begin(), t.vec().end()}; }

NoiseTrainConfig small_noise_config(std::size_t steps) {
  NoiseTrainConfig c;
  c.net = NoiseNetConfig{2, 4};
  c.train.steps = steps;
  c.train.batch = 4;
  c.train.patch = 32;
  c.train.epoch_steps = 10;
  return c;
}

}  // namespace

TEST_CASE("ensemble: every pixel is one of the candidates at that pixel") {
  const Shape s{1, 1, 48, 40};
  NoiseMapSet set;
  for (std::uint64_t m = 0; m < 3; ++m) set.maps.push_back(oracle::random_tensor(s, 10 + m));
  std::vector<std::uint32_t> sel;
  const Tensor z = ensemble_noise(set, 5, &sel);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const bool member = z[i] == set.maps[0][i] || z[i] == set.maps[1][i] || z[i] == set.maps[2][i];
    CHECK(member);
    CHECK(z[i] == set.maps[sel[i]][i]);
  }
  CHECK(ensemble_noise(set, 5).vec() == z.vec());
  CHECK(ensemble_noise(set, 6).vec() != z.vec());
  CHECK_THROWS_AS(ensemble_noise(NoiseMapSet{}, 1), ConfigError);
}

TEST_CASE("ensemble: m=1 returns the single map bit-exactly") {
  NoiseMapSet set;
  set.maps.push_back(oracle::random_tensor(Shape{1, 1, 32, 32}, 3));
  CHECK(ensemble_noise(set, 99).vec() == set.maps[0].vec());
}

TEST_CASE("ensemble: 0/1 maps give frequency 0.5 within 0.02") {
  const Shape s{1, 1, 64, 64};
  NoiseMapSet set;
  set.maps = {constant(s, 0.0f), constant(s, 1.0f)};
  const Tensor z = ensemble_noise(set, 17);
  std::size_t ones = 0;
  for (float v : z.vec()) {
    CHECK((v == 0.0f || v == 1.0f));
    ones += v == 1.0f;
  }
  CHECK(std::abs(double(ones) / double(z.size()) - 0.5) < 0.02);
}

TEST_CASE("ensemble: selection is uniform (chi-square) and independent across pixels") {
  const Shape s{1, 1, 250, 400};  // 10^5 pixels
  NoiseMapSet set;
  for (int m = 0; m < 3; ++m) set.maps.push_back(constant(s, float(m)));
  std::vector<std::uint32_t> sel;
  ensemble_noise(set, 2024, &sel);
  std::array<double, 3> counts{};
  for (auto j : sel) counts[j] += 1.0;
  const double expected = double(sel.size()) / 3.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double p = oracle::chi2_sf_df2(chi2);
  MESSAGE("chi-square " << chi2 << ", p " << p);
  CHECK(p > 0.001);

  std::vector<double> ind(sel.size());
  for (std::size_t i = 0; i < sel.size(); ++i) ind[i] = sel[i] == 0 ? 1.0 : 0.0;
  CHECK(std::abs(horizontal_corr(ind, 400)) < 0.02);
}

TEST_CASE("hist: constant maps stay in their bin") {
  const std::vector<Tensor> maps{constant(Shape{1, 1, 16, 16}, 0.3f)};
  const NoiseHistogram h(maps);
  const Tensor z = h.sample(Shape{1, 1, 32, 32}, 4);
  for (float v : z.vec()) CHECK(v == doctest::Approx(0.3).epsilon(1e-6));
  CHECK_THROWS_AS(hist_noise(std::vector<Tensor>{}, Shape{1, 1, 4, 4}, 1), ConfigError);
}

TEST_CASE("hist: mean within 3 standard errors; spatially uncorrelated") {
  // Skewed source: |N(0,1)| * 0.05 - 0.01
  Tensor src = oracle::random_tensor(Shape{1, 1, 64, 64}, 8, 0.0f, 1.0f);
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = src[i] * src[i] * 0.05f - 0.01f;
  const std::vector<Tensor> maps{src};
  const Tensor z = hist_noise(maps, Shape{1, 1, 250, 400}, 21);
  const double se = std_of(src) / std::sqrt(double(z.size()));
  CHECK(std::abs(mean_of(z) - mean_of(src)) < 3.0 * se);
  CHECK(std::abs(horizontal_corr(to_double(z), 400)) < 0.02);
  CHECK(hist_noise(maps, Shape{1, 1, 8, 8}, 21).vec() == hist_noise(maps, Shape{1, 1, 8, 8}, 21).vec());
  // samples stay inside the observed range
  const NoiseHistogram h(maps);
  for (float v : z.vec()) {
    CHECK(v >= h.lo() - 1e-7);
    CHECK(v <= h.hi() + 1e-7);
  }
}

TEST_CASE("gaussian: std 0.02, zero mean, seeded") {
  const Tensor z = gaussian_noise(Shape{1, 1, 250, 400}, 77);
  CHECK(std::abs(std_of(z) - 0.02) < 0.0005);
  CHECK(std::abs(mean_of(z)) < 3.0 * 0.02 / std::sqrt(double(z.size())));
  CHECK(gaussian_noise(Shape{1, 1, 20, 20}, 3).vec() == gaussian_noise(Shape{1, 1, 20, 20}, 3).vec());
  CHECK(std::abs(horizontal_corr(to_double(z), 400)) < 0.02);
}

TEST_CASE("model+hist: blend algebra") {
  const NoiseNet net = build_noise_net(NoiseNetConfig{2, 4}, 5);
  const NoiseEnsemble ens({net}, {"P01"});
  const Tensor x = oracle::random_tensor(Shape{1, 1, 32, 32}, 6, 0.0f, 1.0f);
  const std::vector<Tensor> maps{oracle::random_tensor(Shape{1, 1, 32, 32}, 7, -0.05f, 0.05f)};
  const NoiseHistogram h(maps);
  const Tensor model = predict_noise(net, x);
  const Tensor hs = h.sample(x.shape(), 8);
  CHECK(model_plus_hist(ens, h, x, 8, {1.0, 0.0}).vec() == model.vec());
  CHECK(model_plus_hist(ens, h, x, 8, {0.0, 1.0}).vec() == hs.vec());
  const Tensor mix = model_plus_hist(ens, maps, x, 8);
  for (std::size_t i = 0; i < mix.size(); ++i) CHECK(mix[i] == 0.5f * model[i] + 0.5f * hs[i]);

  const NoiseEnsemble two({net, build_noise_net(NoiseNetConfig{2, 4}, 6)}, {"P01", "P02"});
  CHECK_THROWS_AS(model_plus_hist(two, h, x, 8), ConfigError);
}

TEST_CASE("noise set: one map per model, m=1 equals predict_noise") {
  const NoiseNet a = build_noise_net(NoiseNetConfig{2, 4}, 1);
  const NoiseNet b = build_noise_net(NoiseNetConfig{2, 4}, 2);
  const Tensor x = oracle::random_tensor(Shape{1, 1, 32, 32}, 3, 0.0f, 1.0f);
  const NoiseMapSet one = predict_noise_set(NoiseEnsemble({a}, {"A"}), x);
  REQUIRE(one.size() == 1);
  CHECK(one.maps[0].vec() == predict_noise(a, x).vec());
  const NoiseMapSet two = predict_noise_set(NoiseEnsemble({a, b}, {"A", "B"}), x);
  CHECK(two.maps[0].shape() == x.shape());
  CHECK(two.maps[1].shape() == x.shape());
  CHECK(two.maps[0].vec() != two.maps[1].vec());
  CHECK_THROWS_AS(NoiseEnsemble({}, {}), ConfigError);
}

TEST_CASE("noise model training: loss decreases; zero noise is learned; seeds differ") {
  std::vector<CtSlice> nd, ld;
  for (std::uint64_t k = 0; k < 2; ++k) {
    nd.push_back(synth_phantom(40 + k, 64));
    ld.push_back(synth_ldct(nd.back(), 0.25, 3, k));
  }
  const auto cfg = small_noise_config(80);
  const TrainedNoiseModel m1 = train_noise_model(ld, nd, cfg, 1);
  CHECK(m1.history.final_probe_loss < m1.history.initial_probe_loss);
  const TrainedNoiseModel m2 = train_noise_model(ld, nd, cfg, 2);
  CHECK_FALSE(m1.net.same_parameters(m2.net));

  const TrainedNoiseModel zero = train_noise_model(nd, nd, cfg, 3);
  const Tensor pred = predict_noise(zero.net, nd[0].tensor());
  double mad = 0.0;
  for (float v : pred.vec()) mad += std::abs(v);
  CHECK(mad / double(pred.size()) < 0.01);

  CHECK_THROWS_AS(train_noise_model(std::vector<CtSlice>{}, std::vector<CtSlice>{}, cfg, 1), ConfigError);
}

TEST_CASE("noise map is X - Y") {
  const CtSlice y = synth_phantom(2, 32);
  const CtSlice x = synth_ldct(y, 0.25, 1, 1);
  const Tensor z = noise_map(x, y);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == x.pixels[i] - y.pixels[i]);
}

TEST_CASE("ensemble: save/load round trip") {
  TempDir dir;
  const NoiseEnsemble ens({build_noise_net(NoiseNetConfig{2, 4}, 1), build_noise_net(NoiseNetConfig{2, 4}, 2)},
                          {"P03", "P07"});
  const auto manifest = save_ensemble(ens, dir / "noise");
  const NoiseEnsemble back = load_ensemble(manifest);
  REQUIRE(back.size() == 2);
  CHECK(back.subject_ids() == ens.subject_ids());
  for (std::size_t i = 0; i < 2; ++i) CHECK(back.model(i).same_parameters(ens.model(i)));
  CHECK_THROWS_AS(load_ensemble(dir / "missing.json"), DataError);
}

TEST_CASE("lag-1 autocorrelation agrees with a direct computation") {
  // Moving average of white noise along rows only: horizontal r = 0.5, vertical 0.
  const Tensor w = oracle::random_tensor(Shape{1, 1, 200, 201}, 9);
  Tensor t(Shape{1, 1, 200, 200});
  for (std::size_t y = 0; y < 200; ++y)
    for (std::size_t x = 0; x < 200; ++x) t.at(0, 0, y, x) = w.at(0, 0, y, x) + w.at(0, 0, y, x + 1);
  CHECK(lag1_autocorrelation(t) == doctest::Approx(0.25).epsilon(0.1));
  CHECK(std::abs(lag1_autocorrelation(gaussian_noise(Shape{1, 1, 200, 200}, 4))) < 0.02);
  CHECK(lag1_autocorrelation(constant(Shape{1, 1, 8, 8}, 1.0f)) == 0.0);
}
