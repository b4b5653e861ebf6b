#include "catintell/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "catintell/dataset.hpp"
#include "catintell/error.hpp"

namespace catintell {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorKind::ShapeError, std::string(what) + ": image sizes differ (" + std::to_string(a.height) + "x" +
                                    std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width) + ")");
  }
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWin);
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& g) {
  const int oh = h - kWin + 1;
  const int ow = w - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * plane[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  if (a.height < kWin || a.width < kWin) fail(ErrorKind::RangeError, "ssim needs images of at least 11x11");
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const int h = a.height;
  const int w = a.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t p = 0; p < n; ++p) {
      x[p] = a.pixels[p * 3 + c];
      y[p] = b.pixels[p * 3 + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, h, w, g);
    const auto my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g);
    const auto syy = filter_valid(yy, h, w, g);
    const auto sxy = filter_valid(xy, h, w, g);
    double acc = 0.0;
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = sxx[p] - mx[p] * mx[p];
      const double vy = syy[p] - my[p] * my[p];
      const double cov = sxy[p] - mx[p] * my[p];
      acc += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2)) /
             ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

EvalReport summarize(std::vector<EvalRow> rows) {
  EvalReport r;
  r.rows = std::move(rows);
  if (r.rows.empty()) return r;
  const double n = static_cast<double>(r.rows.size());
  for (const auto& row : r.rows) {
    r.psnr_mean += row.psnr;
    r.ssim_mean += row.ssim;
  }
  r.psnr_mean /= n;
  r.ssim_mean /= n;
  for (const auto& row : r.rows) {
    r.psnr_std += (row.psnr - r.psnr_mean) * (row.psnr - r.psnr_mean);
    r.ssim_std += (row.ssim - r.ssim_mean) * (row.ssim - r.ssim_mean);
  }
  r.psnr_std = std::sqrt(r.psnr_std / n);
  r.ssim_std = std::sqrt(r.ssim_std / n);
  return r;
}

EvalReport evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& target_dir) {
  std::map<std::string, std::filesystem::path> preds;
  std::map<std::string, std::filesystem::path> targets;
  for (const auto& p : list_images(pred_dir)) preds[p.filename().string()] = p;
  for (const auto& p : list_images(target_dir)) targets[p.filename().string()] = p;
  for (const auto& [name, path] : preds) {
    if (!targets.count(name)) fail(ErrorKind::PairingError, "no target for prediction " + name);
  }
  for (const auto& [name, path] : targets) {
    if (!preds.count(name)) fail(ErrorKind::PairingError, "no prediction for target " + name);
  }
  if (preds.empty()) fail(ErrorKind::EmptyCorpus, "no images in " + pred_dir.string());
  std::vector<EvalRow> rows;
  for (const auto& [name, path] : preds) {
    const Image p = load_image(path);
    const Image t = load_image(targets.at(name));
    rows.push_back({name, psnr(p, t), ssim(p, t)});
  }
  return summarize(std::move(rows));
}

void write_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  char buf[256];
  {
    std::ofstream csv(out_dir / "report.csv", std::ios::binary | std::ios::trunc);
    if (!csv) fail(ErrorKind::IoError, "cannot write " + (out_dir / "report.csv").string());
    csv << "name,psnr,ssim\n";
    for (const auto& r : report.rows) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", r.psnr, r.ssim);
      csv << r.name << buf;
    }
  }
  std::ofstream txt(out_dir / "report.txt", std::ios::binary | std::ios::trunc);
  if (!txt) fail(ErrorKind::IoError, "cannot write " + (out_dir / "report.txt").string());
  txt << "images: " << report.rows.size() << '\n';
  std::snprintf(buf, sizeof(buf), "PSNR: %.4f dB (std %.4f)\nSSIM: %.6f (std %.6f)\n", report.psnr_mean,
                report.psnr_std, report.ssim_mean, report.ssim_std);
  txt << buf;
}

}  // namespace catintell
