#include "spnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "spnet/errors.hpp"

namespace spnet {

float Image::sample(double x, double y, float fill) const {
  if (x < -0.5 || y < -0.5 || x > width - 0.5 || y > height - 0.5) return fill;
  const double xc = std::clamp(x, 0.0, static_cast<double>(width - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = std::min(static_cast<int>(xc), width - 1);
  const int y0 = std::min(static_cast<int>(yc), height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = xc - x0;
  const double fy = yc - y0;
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

double Image::mean() const {
  if (pixels.empty()) return 0.0;
  double sum = 0.0;
  for (float p : pixels) sum += p;
  return sum / static_cast<double>(pixels.size());
}

std::vector<std::uint8_t> to_gray8(const Image& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0f, 255.0f)));
  }
  return out;
}

Image from_gray8(int width, int height, const std::vector<std::uint8_t>& data) {
  Image img(width, height);
  for (std::size_t i = 0; i < data.size() && i < img.pixels.size(); ++i) img.pixels[i] = data[i];
  return img;
}

void quantize(Image& img) {
  for (float& p : img.pixels) p = static_cast<float>(std::lround(std::clamp(p, 0.0f, 255.0f)));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const Image& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  const std::vector<std::uint8_t> gray = to_gray8(img);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, gray.data() + static_cast<std::size_t>(y) * img.width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Image img;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 1) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG channel layout: " + path);
  }
  img = Image(w, h);
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) img.at(x, y) = row[x];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Image resize_area(const Image& img, int width, int height) {
  if (width == img.width && height == img.height) return img;
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int oy = 0; oy < height; ++oy) {
    const double y0 = oy * sy;
    const double y1 = y0 + sy;
    for (int ox = 0; ox < width; ++ox) {
      const double x0 = ox * sx;
      const double x1 = x0 + sx;
      double acc = 0.0;
      double weight = 0.0;
      for (int y = static_cast<int>(y0); y < std::min(static_cast<int>(std::ceil(y1)), img.height);
           ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        if (wy <= 0.0) continue;
        for (int x = static_cast<int>(x0);
             x < std::min(static_cast<int>(std::ceil(x1)), img.width); ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          if (wx <= 0.0) continue;
          acc += wx * wy * img.at(x, y);
          weight += wx * wy;
        }
      }
      out.at(ox, oy) = static_cast<float>(weight > 0.0 ? acc / weight : 0.0);
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  Image tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * img.at(std::clamp(x + i, 0, img.width - 1), y);
      }
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, img.height - 1));
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace spnet
