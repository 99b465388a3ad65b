#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pct/errors.hpp"
#include "pct/metrics.hpp"
#include "temp_dir.hpp"

using namespace pct;

namespace {

Tensor filled(const Shape& s, float v) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = v;
  return t;
}

}  // namespace

TEST_CASE("psnr: closed-form examples") {
  const Tensor a = oracle::random_tensor(Shape{1, 1, 16, 16}, 1, 0.f, 1.f);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, a) > 0);
  // uniform error 0.1 -> MSE 0.01 -> 20 dB
  Tensor b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += 0.1f;
  CHECK(psnr(b, a) == doctest::Approx(20.0).epsilon(1e-5));
  // MSE 0.01 from a +-0.1 pattern
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += (i % 2 ? 0.1f : -0.1f);
  CHECK(psnr(c, a) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(b, a, 2.0) == doctest::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-5));
  CHECK_THROWS_AS(psnr(a, Tensor(1, 1, 16, 15)), ShapeError);
}

TEST_CASE("psnr: invariant to a shared constant offset") {
  const Tensor a = oracle::random_tensor(Shape{1, 1, 16, 16}, 2, 0.f, 0.5f);
  const Tensor b = oracle::random_tensor(Shape{1, 1, 16, 16}, 3, 0.f, 0.5f);
  Tensor a2 = a, b2 = b;
  for (std::size_t i = 0; i < a.size(); ++i) a2[i] += 0.25f, b2[i] += 0.25f;
  CHECK(psnr(a2, b2) == doctest::Approx(psnr(a, b)).epsilon(1e-5));
}

TEST_CASE("ssim: identity, constant offset, symmetry") {
  const Tensor a = oracle::random_tensor(Shape{1, 1, 32, 32}, 4, 0.f, 1.f);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
  const Tensor b = oracle::random_tensor(Shape{1, 1, 32, 32}, 5, 0.f, 1.f);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);

  // flat 0.75 vs flat 0.25: only the luminance term is < 1
  const double c1 = 0.01 * 0.01;
  const double expected = (2 * 0.75 * 0.25 + c1) / (0.75 * 0.75 + 0.25 * 0.25 + c1);
  const double got = ssim(filled(Shape{1, 1, 20, 20}, 0.75f), filled(Shape{1, 1, 20, 20}, 0.25f));
  CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  CHECK(got < 1.0);
  CHECK_THROWS(ssim(Tensor(1, 1, 10, 10), Tensor(1, 1, 10, 10)));
  CHECK_THROWS_AS(ssim(a, Tensor(1, 1, 32, 31)), ShapeError);
}

TEST_CASE("ssim: matches the literal per-window formula within 1e-6") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    const Shape shape{1 + s % 2, 1, 20 + 3 * s, 17 + 5 * s};
    const Tensor a = oracle::random_tensor(shape, 10 + s, 0.f, 1.f);
    Tensor b = a;
    const Tensor n = oracle::random_tensor(shape, 20 + s, -0.2f, 0.2f);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += n[i] * float(s) / 5.0f;
    if (s == 0) b = oracle::random_tensor(shape, 30, 0.f, 1.f);
    worst = std::max(worst, std::abs(ssim(a, b) - oracle::ssim_literal(a, b)));
  }
  MESSAGE("max |ssim - literal| " << worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("ssim: gaussian taps are normalized and symmetric") {
  const auto g = gaussian_taps(11, 1.5);
  double s = 0.0;
  for (double v : g) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < 5; ++i) CHECK(g[i] == g[10 - i]);
  CHECK(g[5] > g[4]);
}

TEST_CASE("evaluate: rows, std, inf sentinel, aggregation") {
  const std::vector<Tensor> targets{oracle::random_tensor(Shape{1, 1, 24, 24}, 40, 0.f, 1.f),
                                    oracle::random_tensor(Shape{1, 1, 24, 24}, 41, 0.f, 1.f)};
  std::vector<Tensor> noisy = targets;
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor n = oracle::random_tensor(targets[k].shape(), 50 + k, -0.1f, 0.1f);
    for (std::size_t i = 0; i < n.size(); ++i) noisy[k][i] += n[i];
  }
  const EvalReport rep = evaluate({{"zeta", targets}, {"alpha", noisy}}, targets);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].method == "alpha");
  CHECK(rep.rows[1].method == "zeta");
  const ReportRow& perfect = rep.row("zeta");
  CHECK(std::isinf(perfect.psnr_mean));
  CHECK(perfect.psnr_inf == 2);
  CHECK(perfect.ssim_mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(format_psnr(perfect.psnr_mean) == "inf");

  // recompute alpha from the per-image records
  double m = 0.0, sq = 0.0;
  std::size_t cnt = 0;
  for (const auto& r : rep.records) {
    if (r.method != "alpha") continue;
    CHECK(r.psnr == doctest::Approx(psnr(noisy[r.index], targets[r.index])).epsilon(1e-12));
    m += r.psnr, sq += r.psnr * r.psnr, ++cnt;
  }
  REQUIRE(cnt == 2);
  m /= 2.0;
  const ReportRow& row = rep.row("alpha");
  CHECK(std::abs(row.psnr_mean - m) < 1e-9);
  CHECK(std::abs(row.psnr_std - std::sqrt(std::max(0.0, sq / 2.0 - m * m))) < 1e-9);

  const EvalReport single = evaluate({{"x", {noisy[0]}}}, {targets[0]});
  CHECK(single.rows[0].psnr_std == 0.0);
  CHECK(single.rows[0].ssim_std == 0.0);
  CHECK_THROWS(evaluate({{"x", {noisy[0]}}}, targets));
}

TEST_CASE("report: csv, table and ndjson files") {
  TempDir dir;
  const std::vector<Tensor> targets{oracle::random_tensor(Shape{1, 1, 16, 16}, 60, 0.f, 1.f)};
  const EvalReport rep = evaluate({{"LDCT input", targets}}, targets);
  write_report(rep, dir.path);
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::exists(dir / "report.txt"));
  CHECK(std::filesystem::exists(dir / "records.ndjson"));
  const std::string csv = report_csv(rep);
  CHECK(csv.rfind("method,psnr_mean,psnr_std,ssim_mean,ssim_std", 0) == 0);
  CHECK(csv.find("LDCT input,inf") != std::string::npos);
  CHECK(report_table(rep).find("LDCT input") != std::string::npos);
}
