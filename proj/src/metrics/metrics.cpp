#include "pct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pct/errors.hpp"

namespace pct {

double psnr(const Tensor& pred, const Tensor& target, double range) {
  require_same_shape(pred, target, "psnr");
  if (!(range > 0.0)) throw ConfigError("psnr: range must be positive");
  if (pred.empty()) throw ShapeError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.size());
  if (mse == 0.0) return kInfPsnr;
  return 10.0 * std::log10(range * range / mse);
}

std::vector<double> gaussian_taps(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ConfigError("SSIM window size must be odd and positive");
  std::vector<double> g(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    g[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i + r)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

namespace {

// Separable weighted filtering over fully contained windows ("valid" mode).
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size();
  const std::size_t oh = h - k + 1;
  const std::size_t ow = w - k + 1;
  std::vector<double> tmp(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * img[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& target, const SsimConfig& cfg) {
  require_same_shape(pred, target, "ssim");
  const Shape s = pred.shape();
  const auto k = static_cast<std::size_t>(cfg.window);
  if (s.h < k || s.w < k) {
    throw ShapeError("ssim: image " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is smaller than the " +
                     std::to_string(k) + "x" + std::to_string(k) + " window");
  }
  const std::vector<double> g = gaussian_taps(cfg.window, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
  const std::size_t plane = s.plane();
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
      const float* pa = pred.plane(n, c);
      const float* pb = target.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        a[i] = pa[i];
        b[i] = pb[i];
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
      }
      const auto mu_a = filter_valid(a, s.h, s.w, g);
      const auto mu_b = filter_valid(b, s.h, s.w, g);
      const auto e_aa = filter_valid(aa, s.h, s.w, g);
      const auto e_bb = filter_valid(bb, s.h, s.w, g);
      const auto e_ab = filter_valid(ab, s.h, s.w, g);
      double acc = 0.0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
      }
      total += acc / static_cast<double>(mu_a.size());
    }
  }
  return total / static_cast<double>(s.n * s.c);
}

const ReportRow& EvalReport::row(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return r;
  }
  throw ConfigError("report has no row '" + method + "'");
}

ReportRow aggregate(const std::string& method, const std::vector<ImageRecord>& records) {
  ReportRow row;
  row.method = method;
  std::vector<double> p;
  std::vector<double> q;
  for (const auto& r : records) {
    if (r.method != method) continue;
    if (std::isinf(r.psnr)) {
      ++row.psnr_inf;
    } else {
      p.push_back(r.psnr);
    }
    q.push_back(r.ssim);
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size()));
  };
  row.psnr_count = p.size();
  mean_std(p, row.psnr_mean, row.psnr_std);
  if (p.empty() && row.psnr_inf > 0) row.psnr_mean = kInfPsnr;
  mean_std(q, row.ssim_mean, row.ssim_std);
  return row;
}

EvalReport evaluate(const std::map<std::string, std::vector<Tensor>>& method_outputs,
                    const std::vector<Tensor>& targets, const SsimConfig& cfg) {
  EvalReport rep;
  for (const auto& [method, outputs] : method_outputs) {
    if (outputs.size() != targets.size()) {
      throw ConfigError("evaluate: method '" + method + "' has " + std::to_string(outputs.size()) +
                        " images for " + std::to_string(targets.size()) + " targets");
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      rep.records.push_back({method, i, psnr(outputs[i], targets[i]), ssim(outputs[i], targets[i], cfg)});
    }
    rep.rows.push_back(aggregate(method, rep.records));
  }
  return rep;
}

std::string format_psnr(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

namespace {

std::string fmt(double v, const char* spec) {
  char buf[32];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::ostringstream o;
  o << "method,psnr_mean,psnr_std,ssim_mean,ssim_std,psnr_inf_count\n";
  for (const auto& row : r.rows) {
    o << row.method << ',' << format_psnr(row.psnr_mean) << ',' << fmt(row.psnr_std, "%.4f") << ','
      << fmt(row.ssim_mean, "%.6f") << ',' << fmt(row.ssim_std, "%.6f") << ',' << row.psnr_inf << '\n';
  }
  return o.str();
}

std::string report_table(const EvalReport& r) {
  std::size_t name_w = 6;
  for (const auto& row : r.rows) name_w = std::max(name_w, row.method.size());
  std::ostringstream o;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  o << pad("Method", name_w) << "  " << pad("PSNR (std)", 20) << "  SSIM (std)\n";
  o << std::string(name_w, '-') << "  " << std::string(20, '-') << "  " << std::string(20, '-') << '\n';
  for (const auto& row : r.rows) {
    std::string p = format_psnr(row.psnr_mean) + " (" + fmt(row.psnr_std, "%.4f") + ")";
    if (row.psnr_inf > 0) p += " [" + std::to_string(row.psnr_inf) + " inf]";
    o << pad(row.method, name_w) << "  " << pad(p, 20) << "  " << fmt(row.ssim_mean, "%.6f") << " ("
      << fmt(row.ssim_std, "%.6f") << ")\n";
  }
  return o.str();
}

std::string report_ndjson(const EvalReport& r) {
  std::ostringstream o;
  for (const auto& rec : r.records) {
    nlohmann::json j{{"method", rec.method}, {"index", rec.index}, {"ssim", rec.ssim}};
    if (std::isinf(rec.psnr)) {
      j["psnr"] = "inf";
    } else {
      j["psnr"] = rec.psnr;
    }
    o << j.dump() << '\n';
  }
  return o.str();
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    f << text;
  };
  put("report.csv", report_csv(r));
  put("report.txt", report_table(r));
  put("records.ndjson", report_ndjson(r));
}

}  // namespace pct
