#include "catintell/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "catintell/error.hpp"

namespace catintell {

namespace fs = std::filesystem;

void HazeParams::validate() const {
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorKind::RangeError, "transmission must lie in [0, 1]");
  if (!(sigma >= 0.0)) fail(ErrorKind::RangeError, "blur sigma must be non-negative");
  for (double a : light) {
    if (!(a >= 0.0 && a <= 1.0)) fail(ErrorKind::RangeError, "atmospheric light must lie in [0, 1]");
  }
}

Quality HazeParams::severity() const {
  if (t >= 0.75) return Quality::Good;
  if (t >= 0.5) return Quality::Usable;
  return Quality::Reject;
}

namespace {

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;

  Image tmp(img.height, img.width);
  Image out(img.height, img.width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int d = -radius; d <= radius; ++d) {
        const int sx = mirror(x + d, img.width);
        for (int c = 0; c < 3; ++c) acc[c] += k[d + radius] * img.at(y, sx, c);
      }
      for (int c = 0; c < 3; ++c) tmp.at(y, x, c) = acc[c];
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int d = -radius; d <= radius; ++d) {
        const int sy = mirror(y + d, img.height);
        for (int c = 0; c < 3; ++c) acc[c] += k[d + radius] * tmp.at(sy, x, c);
      }
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::clamp(acc[c], 0.0, 1.0);
    }
  }
  return out;
}

Image degrade_traditional(const Image& img, const HazeParams& p) {
  p.validate();
  Image out = gaussian_blur(img, p.sigma);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = std::clamp(p.t * out.pixels[i] + (1.0 - p.t) * p.light[i % 3], 0.0, 1.0);
  }
  return out;
}

namespace {

void blend(Image& img, int y, int x, const std::array<double, 3>& color, double alpha) {
  if (y < 0 || x < 0 || y >= img.height || x >= img.width || alpha <= 0.0) return;
  alpha = std::min(alpha, 1.0);
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1.0 - alpha) * img.at(y, x, c) + alpha * color[c];
}

void stamp(Image& img, double cy, double cx, double radius, const std::array<double, 3>& color, double strength) {
  const int r = static_cast<int>(std::ceil(radius + 1.0));
  for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y) {
    for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
      const double d = std::hypot(y + 0.5 - cy, x + 0.5 - cx);
      blend(img, y, x, color, strength * std::clamp(radius + 0.5 - d, 0.0, 1.0));
    }
  }
}

}  // namespace

Image render_toy_fundus(int side, Rng& rng) {
  if (side < 16) fail(ErrorKind::RangeError, "toy fundus needs at least 16 px");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = side;
  const double field = 0.46 * s;
  const double cy0 = s / 2.0;
  const double cx0 = s / 2.0;
  const std::array<double, 3> base{0.78 + 0.08 * u(rng), 0.36 + 0.06 * u(rng), 0.14 + 0.05 * u(rng)};
  const bool left_eye = u(rng) < 0.5;
  const double disc_x = cx0 + (left_eye ? -1.0 : 1.0) * (0.22 + 0.06 * u(rng)) * s;
  const double disc_y = cy0 + (u(rng) - 0.5) * 0.12 * s;
  const double disc_r = (0.07 + 0.02 * u(rng)) * s;
  const double mac_x = cx0 + (left_eye ? 1.0 : -1.0) * 0.08 * s;
  const double mac_y = cy0 + (u(rng) - 0.5) * 0.06 * s;

  Image img(side, side, 0.0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double r = std::hypot(y + 0.5 - cy0, x + 0.5 - cx0);
      const double inside = std::clamp(field + 0.5 - r, 0.0, 1.0);
      if (inside <= 0.0) continue;
      const double vignette = 1.0 - 0.35 * (r / field) * (r / field);
      const double dm = std::hypot(y + 0.5 - mac_y, x + 0.5 - mac_x) / (0.1 * s);
      const double macula = 1.0 - 0.35 * std::exp(-dm * dm);
      const double dd = std::hypot(y + 0.5 - disc_y, x + 0.5 - disc_x) / disc_r;
      const double disc = std::exp(-std::pow(dd, 4.0));
      for (int c = 0; c < 3; ++c) {
        const double tissue = base[c] * vignette * macula;
        const double bright = std::array<double, 3>{0.98, 0.86, 0.62}[c];
        img.at(y, x, c) = inside * ((1.0 - disc) * tissue + disc * bright);
      }
    }
  }

  const std::array<double, 3> vessel{0.42, 0.08, 0.04};
  const int vessels = 6 + static_cast<int>(u(rng) * 4.0);
  for (int v = 0; v < vessels; ++v) {
    double angle = 2.0 * std::numbers::pi * (v + u(rng) * 0.6) / vessels;
    double py = disc_y;
    double px = disc_x;
    double width = (0.012 + 0.006 * u(rng)) * s;
    const double bend = (u(rng) - 0.5) * 0.05;
    const double length = (0.35 + 0.3 * u(rng)) * s;
    for (double walked = 0.0; walked < length; walked += 0.5) {
      angle += bend + (u(rng) - 0.5) * 0.04;
      py += 0.5 * std::sin(angle);
      px += 0.5 * std::cos(angle);
      if (std::hypot(py - cy0, px - cx0) > field - 1.0) break;
      stamp(img, py, px, std::max(0.4, width * (1.0 - 0.7 * walked / length)), vessel, 0.5);
    }
  }
  return clamp01(std::move(img));
}

std::array<HazeParams, 3> toy_tiers() {
  const std::array<double, 3> light{0.92, 0.86, 0.74};
  return {HazeParams{0.8, 1.0, light}, HazeParams{0.6, 2.0, light}, HazeParams{0.4, 3.0, light}};
}

namespace {

std::string indexed(const char* prefix, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

}  // namespace

ToyCorpus make_toy_corpus(int n, std::uint64_t seed, const fs::path& out_dir, int side, int holdout) {
  if (n < 1) fail(ErrorKind::RangeError, "toy corpus needs at least one image");
  if (holdout < 0) fail(ErrorKind::RangeError, "holdout count must be non-negative");
  std::error_code ec;
  fs::create_directories(out_dir / "hq", ec);
  fs::create_directories(out_dir / "cataract", ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  Rng render_rng = derive_rng(seed, 1);
  Rng haze_rng = derive_rng(seed, 2);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  const auto tiers = toy_tiers();
  auto jittered = [&](const HazeParams& tier) {
    HazeParams p = tier;
    p.t = std::clamp(p.t + jitter(haze_rng), 0.0, 1.0);
    return p;
  };

  ToyCorpus out;
  for (int i = 0; i < n; ++i) {
    const Image hq = render_toy_fundus(side, render_rng);
    const fs::path hq_path = out_dir / "hq" / (indexed("toy_", i) + ".png");
    save_image(hq, hq_path);
    out.samples.push_back({hq_path, Quality::Good});
    for (int k = 0; k < 3; ++k) {
      const HazeParams p = jittered(tiers[k]);
      const fs::path path = out_dir / "cataract" / (indexed("toy_", i) + "_t" + std::to_string(k + 1) + ".png");
      save_image(degrade_traditional(hq, p), path);
      out.samples.push_back({path, p.severity()});
    }
  }
  out.quality_manifest = out_dir / "quality.tsv";
  write_quality_manifest(out.quality_manifest, out.samples);

  if (holdout > 0) {
    fs::create_directories(out_dir / "holdout" / "hq", ec);
    fs::create_directories(out_dir / "holdout" / "degraded", ec);
    if (ec) fail(ErrorKind::IoError, "cannot create holdout directories: " + ec.message());
    Rng hold_rng = derive_rng(seed, 3);
    for (int i = 0; i < holdout; ++i) {
      const Image hq = render_toy_fundus(side, hold_rng);
      const std::string name = indexed("holdout_", i) + ".png";
      save_image(hq, out_dir / "holdout" / "hq" / name);
      save_image(degrade_traditional(hq, jittered(tiers[i % 3])), out_dir / "holdout" / "degraded" / name);
    }
  }
  out.corpus = scan_corpus(out_dir);
  return out;
}

}  // namespace catintell
