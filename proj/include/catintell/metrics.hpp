#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "catintell/imaging.hpp"

namespace catintell {

constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) for [0, 1] images, capped at 100 dB.
double psnr(const Image& a, const Image& b);
// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
// L 1, valid positions only, averaged over pixels then over RGB channels.
double ssim(const Image& a, const Image& b);

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
};

// Aggregates use the population standard deviation.
EvalReport summarize(std::vector<EvalRow> rows);
// Every image in either directory must have a same-named counterpart.
EvalReport evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& target_dir);
// Writes report.csv and report.txt into `out_dir`.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace catintell
