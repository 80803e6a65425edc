#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spnet {

/// Grayscale image with float samples nominally in [0, 255], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  /// Bilinear sample at continuous pixel coordinates; `fill` outside the frame.
  float sample(double x, double y, float fill) const;

  double mean() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Rounds and clamps every sample to an 8-bit gray level.
std::vector<std::uint8_t> to_gray8(const Image& img);
Image from_gray8(int width, int height, const std::vector<std::uint8_t>& data);

/// Clamps and rounds the image in place so it equals what a PNG round trip yields.
void quantize(Image& img);

/// 8-bit grayscale PNG, fixed compression settings so output bytes are a pure
/// function of the pixels. Throws IoError.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

/// Area-averaging resize (box filter) to an arbitrary target size.
Image resize_area(const Image& img, int width, int height);

/// Separable Gaussian blur with kernel radius ceil(3σ), edge-clamped.
Image gaussian_blur(const Image& img, double sigma);

}  // namespace spnet
