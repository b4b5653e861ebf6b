#include "catintell/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "catintell/error.hpp"

namespace catintell {

namespace fs = std::filesystem;

Image::Image(int h, int w, double fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

namespace {

std::string lower_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool is_jpeg(const fs::path& p) {
  const std::string ext = lower_ext(p);
  return ext == ".jpg" || ext == ".jpeg";
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image from_bytes(int h, int w, const std::uint8_t* rgb) {
  Image img(h, w);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = rgb[i] / 255.0;
  return img;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

// Warnings (level -1) cover truncated streams, which libjpeg would
// otherwise pad with grey.
void jpeg_emit(j_common_ptr info, int level) {
  if (level < 0) jpeg_error_exit(info);
}

Image load_jpeg(const fs::path& path) {
  std::FILE* file = std::fopen(path.c_str(), "rb");
  if (!file) fail(ErrorKind::IoError, "cannot open " + path.string());
  jpeg_decompress_struct info{};
  JpegErrorManager err{};
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_emit;
  std::vector<std::uint8_t> bytes;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    std::fclose(file);
    fail(ErrorKind::DecodeError, path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, file);
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  const int w = static_cast<int>(info.output_width);
  const int h = static_cast<int>(info.output_height);
  bytes.resize(static_cast<std::size_t>(w) * h * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = bytes.data() + static_cast<std::size_t>(info.output_scanline) * w * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  std::fclose(file);
  return from_bytes(h, w, bytes.data());
}

void save_jpeg(const std::vector<std::uint8_t>& bytes, int h, int w, const fs::path& path) {
  std::FILE* file = std::fopen(path.c_str(), "wb");
  if (!file) fail(ErrorKind::IoError, "cannot write " + path.string());
  jpeg_compress_struct info{};
  JpegErrorManager err{};
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&info);
    std::fclose(file);
    fail(ErrorKind::IoError, path.string() + ": " + err.message);
  }
  jpeg_create_compress(&info);
  jpeg_stdio_dest(&info, file);
  info.image_width = static_cast<JDIMENSION>(w);
  info.image_height = static_cast<JDIMENSION>(h);
  info.input_components = 3;
  info.in_color_space = JCS_RGB;
  jpeg_set_defaults(&info);
  jpeg_set_quality(&info, 95, TRUE);
  jpeg_start_compress(&info, TRUE);
  while (info.next_scanline < info.image_height) {
    auto* row = const_cast<JSAMPROW>(bytes.data() + static_cast<std::size_t>(info.next_scanline) * w * 3);
    jpeg_write_scanlines(&info, &row, 1);
  }
  jpeg_finish_compress(&info);
  jpeg_destroy_compress(&info);
  if (std::fclose(file) != 0) fail(ErrorKind::IoError, "cannot write " + path.string());
}

Image load_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::DecodeError, path.string() + ": " + msg);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::DecodeError, path.string() + ": " + msg);
  }
  return from_bytes(static_cast<int>(png.height), static_cast<int>(png.width), bytes.data());
}

void check_image(const Image& img) {
  if (img.height < 1 || img.width < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * 3) {
    fail(ErrorKind::ShapeError, "malformed image");
  }
}

}  // namespace

bool is_raster_path(const fs::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image load_image(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) fail(ErrorKind::NotFound, "no such image: " + path.string());
  std::FILE* probe = std::fopen(path.c_str(), "rb");
  if (!probe) fail(ErrorKind::IoError, "cannot open " + path.string());
  unsigned char magic[8] = {};
  const std::size_t got = std::fread(magic, 1, sizeof(magic), probe);
  std::fclose(probe);
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(path);
  if (got >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return load_jpeg(path);
  fail(ErrorKind::DecodeError, path.string() + ": not a PNG or JPEG stream");
}

void save_image(const Image& img, const fs::path& path) {
  check_image(img);
  std::vector<std::uint8_t> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.pixels[i]);
  std::error_code ec;
  const fs::path parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent, ec)) {
    fail(ErrorKind::IoError, "missing directory " + parent.string());
  }
  if (is_jpeg(path)) {
    save_jpeg(bytes, img.height, img.width, path);
    return;
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::IoError, path.string() + ": " + msg);
  }
}

Image resize(const Image& img, int out_h, int out_w) {
  check_image(img);
  if (out_h < 1 || out_w < 1) fail(ErrorKind::RangeError, "resize target must be at least 1x1");
  if (out_h == img.height && out_w == img.width) return img;
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(img.height, out_h);
  const auto tx = taps(img.width, out_w);
  Image out(out_h, out_w);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(a.i0, b.i0, c) * (1.0 - b.f) + img.at(a.i0, b.i1, c) * b.f;
        const double bot = img.at(a.i1, b.i0, c) * (1.0 - b.f) + img.at(a.i1, b.i1, c) * b.f;
        out.at(y, x, c) = std::clamp(top * (1.0 - a.f) + bot * a.f, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image crop(const Image& img, const CropSpec& spec) {
  check_image(img);
  if (spec.size < 1 || spec.top < 0 || spec.left < 0 || spec.top + spec.size > img.height ||
      spec.left + spec.size > img.width) {
    fail(ErrorKind::RangeError, "crop outside image bounds");
  }
  Image out(spec.size, spec.size);
  for (int y = 0; y < spec.size; ++y) {
    const double* src = &img.pixels[(static_cast<std::size_t>(spec.top + y) * img.width + spec.left) * 3];
    std::copy(src, src + static_cast<std::size_t>(spec.size) * 3, &out.pixels[static_cast<std::size_t>(y) * spec.size * 3]);
  }
  return out;
}

Image flip(const Image& img, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return img;
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    const int sy = vertical ? img.height - 1 - y : y;
    for (int x = 0; x < img.width; ++x) {
      const int sx = horizontal ? img.width - 1 - x : x;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Image clamp01(Image img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

CropPair paired_random_crop(const Image& a, const Image& b, int size, Rng& rng) {
  check_image(a);
  check_image(b);
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorKind::ShapeError, "paired crop needs equal image sizes");
  }
  if (size < 1 || size > std::min(a.height, a.width)) {
    fail(ErrorKind::RangeError, "crop size " + std::to_string(size) + " does not fit " +
                                    std::to_string(a.height) + "x" + std::to_string(a.width));
  }
  std::uniform_int_distribution<int> dy(0, a.height - size);
  std::uniform_int_distribution<int> dx(0, a.width - size);
  CropSpec spec;
  spec.top = dy(rng);
  spec.left = dx(rng);
  spec.size = size;
  return {crop(a, spec), crop(b, spec), spec};
}

Tensor to_tensor(const std::vector<Image>& batch) {
  if (batch.empty()) fail(ErrorKind::ShapeError, "empty image batch");
  const int h = batch.front().height;
  const int w = batch.front().width;
  Tensor t(Shape{static_cast<int>(batch.size()), 3, h, w});
  for (int n = 0; n < static_cast<int>(batch.size()); ++n) {
    const Image& img = batch[n];
    check_image(img);
    if (img.height != h || img.width != w) fail(ErrorKind::ShapeError, "batch images differ in size");
    for (int c = 0; c < 3; ++c) {
      double* dst = t.plane(n, c);
      for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) dst[p] = img.pixels[p * 3 + c];
    }
  }
  return t;
}

Tensor to_tensor(const Image& img) { return to_tensor(std::vector<Image>{img}); }

std::vector<Image> to_images(const Tensor& t) {
  const Shape s = t.shape();
  if (s.c != 3) fail(ErrorKind::ShapeError, "expected 3 channels, got " + s.str());
  std::vector<Image> out;
  for (int n = 0; n < s.n; ++n) {
    Image img(s.h, s.w);
    for (int c = 0; c < 3; ++c) {
      const double* src = t.plane(n, c);
      for (std::size_t p = 0; p < s.plane(); ++p) img.pixels[p * 3 + c] = src[p];
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace catintell
