#pragma once

#include <filesystem>
#include <vector>

#include "catintell/nn.hpp"
#include "catintell/tensor.hpp"

namespace catintell {

// Height x width x 3 RGB, row-major with interleaved channels, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const Image&) const = default;
};

struct CropSpec {
  int top = 0;
  int left = 0;
  int size = 0;
  bool operator==(const CropSpec&) const = default;
};

bool is_raster_path(const std::filesystem::path& path);

Image load_image(const std::filesystem::path& path);
// PNG unless the extension is .jpg/.jpeg. Values are clamped and quantized to 8 bits.
void save_image(const Image& img, const std::filesystem::path& path);

Image resize(const Image& img, int out_h, int out_w);
Image crop(const Image& img, const CropSpec& spec);
Image flip(const Image& img, bool horizontal, bool vertical);
Image clamp01(Image img);

struct CropPair {
  Image a;
  Image b;
  CropSpec spec;
};

CropPair paired_random_crop(const Image& a, const Image& b, int size, Rng& rng);

// Image batch <-> (N, 3, H, W) tensor. All images must share a size.
Tensor to_tensor(const std::vector<Image>& batch);
Tensor to_tensor(const Image& img);
std::vector<Image> to_images(const Tensor& t);

}  // namespace catintell
