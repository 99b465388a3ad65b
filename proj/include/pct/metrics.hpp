#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pct/tensor.hpp"

namespace pct {

inline constexpr double kInfPsnr = std::numeric_limits<double>::infinity();

// 10 log10(range^2 / MSE) over all elements; +inf when MSE is 0.
double psnr(const Tensor& pred, const Tensor& target, double range = 1.0);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int size, double sigma);

// Mean local SSIM over all fully contained windows, per (n, c) plane and then
// averaged over planes.
double ssim(const Tensor& pred, const Tensor& target, const SsimConfig& cfg = {});

struct ImageRecord {
  std::string method;
  std::size_t index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct ReportRow {
  std::string method;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  std::size_t psnr_count = 0;  // finite values used
  std::size_t psnr_inf = 0;    // +inf values left out of mean/std
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<ImageRecord> records;

  const ReportRow& row(const std::string& method) const;
};

// Population mean and std over the finite values; inf entries are counted.
ReportRow aggregate(const std::string& method, const std::vector<ImageRecord>& records);

// Rows ordered by method name. Every method must supply one image per target.
EvalReport evaluate(const std::map<std::string, std::vector<Tensor>>& method_outputs,
                    const std::vector<Tensor>& targets, const SsimConfig& cfg = {});

std::string format_psnr(double v);
std::string report_csv(const EvalReport& r);
std::string report_table(const EvalReport& r);
std::string report_ndjson(const EvalReport& r);
// Writes report.csv, report.txt and records.ndjson into `dir`.
void write_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace pct
