#include "spnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spnet {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void add_noise(Image& img, double sigma, Rng& rng) {
  for (float& p : img.pixels) p += static_cast<float>(rng.normal(0.0, sigma));
}

void clamp_pixels(Image& img) {
  for (float& p : img.pixels) p = std::clamp(p, 0.0f, 255.0f);
}

}  // namespace

AugmentConfig AugmentConfig::none() {
  AugmentConfig cfg;
  cfg.rotation_deg = {0.0, 0.0};
  cfg.translation_px = {0.0, 0.0};
  cfg.reflect_horizontal = false;
  cfg.reflect_vertical = false;
  cfg.stage1_noise_prob = 0.0;
  cfg.stage1_blur_prob = 0.0;
  cfg.stage1_copies = 1;
  cfg.blur_prob = 0.0;
  cfg.noise_prob = 0.0;
  cfg.cutout_prob = 0.0;
  cfg.brightness_prob = 0.0;
  cfg.contrast_prob = 0.0;
  return cfg;
}

AugmentConfig AugmentConfig::desk(int size) {
  AugmentConfig cfg;
  const double s = size / 512.0;
  cfg.translation_px = {-40.0 * s, 40.0 * s};
  cfg.cutout_size = {std::max(1, size / 32), std::max(2, size / 10)};
  cfg.stage1_noise_sigma = {0.0, 4.0};
  cfg.noise_sigma = {1.0, 5.0};
  cfg.blur_sigma = {0.3, 0.7};
  cfg.stage1_blur_sigma = {0.3, 0.6};
  return cfg;
}

Rng augment_rng(const AugmentConfig& cfg, std::uint64_t frame_index, std::uint64_t epoch) {
  return Rng(derive_seed(cfg.seed ^ 0xa06e47ULL, frame_index, epoch));
}

RigidTransform sample_rigid(const AugmentConfig& cfg, Rng& rng) {
  RigidTransform t;
  t.rotation_deg = rng.uniform(cfg.rotation_deg.min, cfg.rotation_deg.max);
  t.dx = rng.uniform(cfg.translation_px.min, cfg.translation_px.max);
  t.dy = rng.uniform(cfg.translation_px.min, cfg.translation_px.max);
  t.flip_horizontal = cfg.reflect_horizontal && rng.bernoulli(0.5);
  t.flip_vertical = cfg.reflect_vertical && rng.bernoulli(0.5);
  return t;
}

Ellipse transform_ellipse(const Ellipse& e, const RigidTransform& t, int width, int height) {
  Ellipse out = e;
  if (t.flip_horizontal) {
    out.cx = width - 1 - out.cx;
    out.theta = 180.0 - out.theta;
  }
  if (t.flip_vertical) {
    out.cy = height - 1 - out.cy;
    out.theta = -out.theta;
  }
  const double phi = t.rotation_deg * kDegToRad;
  const double ox = 0.5 * (width - 1);
  const double oy = 0.5 * (height - 1);
  const double rx = out.cx - ox;
  const double ry = out.cy - oy;
  out.cx = ox + std::cos(phi) * rx - std::sin(phi) * ry + t.dx;
  out.cy = oy + std::sin(phi) * rx + std::cos(phi) * ry + t.dy;
  out.theta += t.rotation_deg;
  return normalize(out);
}

Scene apply_rigid(const Scene& frame, const RigidTransform& t) {
  const Image& src = frame.image;
  const int w = src.width;
  const int h = src.height;
  const float fill = static_cast<float>(src.mean());
  const double phi = t.rotation_deg * kDegToRad;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const double ox = 0.5 * (w - 1);
  const double oy = 0.5 * (h - 1);

  Scene out;
  out.image = Image(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map: untranslate, unrotate, unreflect.
      const double px = x - t.dx - ox;
      const double py = y - t.dy - oy;
      double sx = ox + c * px + s * py;
      double sy = oy - s * px + c * py;
      if (t.flip_vertical) sy = h - 1 - sy;
      if (t.flip_horizontal) sx = w - 1 - sx;
      out.image.at(x, y) = src.sample(sx, sy, fill);
    }
  }
  for (const Annotation& a : frame.annotations) {
    Annotation moved = a;
    moved.ellipse = transform_ellipse(a.ellipse, t, w, h);
    if (moved.ellipse.cx < 0.0 || moved.ellipse.cy < 0.0 || moved.ellipse.cx > w - 1 ||
        moved.ellipse.cy > h - 1) {
      continue;
    }
    out.annotations.push_back(moved);
  }
  return out;
}

Scene stage1_apply(const Scene& frame, const AugmentConfig& cfg, Rng& rng) {
  const RigidTransform t = sample_rigid(cfg, rng);
  Scene out = apply_rigid(frame, t);
  if (rng.bernoulli(cfg.stage1_noise_prob)) {
    add_noise(out.image, rng.uniform(cfg.stage1_noise_sigma.min, cfg.stage1_noise_sigma.max), rng);
  }
  if (rng.bernoulli(cfg.stage1_blur_prob)) {
    out.image = gaussian_blur(
        out.image, rng.uniform(cfg.stage1_blur_sigma.min, cfg.stage1_blur_sigma.max));
  }
  clamp_pixels(out.image);
  return out;
}

void apply_cutout(Image& image, const std::vector<CutoutRect>& rects, float fill) {
  for (const CutoutRect& r : rects) {
    for (int y = std::max(0, r.y0); y < std::min(image.height, r.y1); ++y) {
      for (int x = std::max(0, r.x0); x < std::min(image.width, r.x1); ++x) image.at(x, y) = fill;
    }
  }
}

Image stage2_apply(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  Image out = image;
  bool changed = false;
  if (rng.bernoulli(cfg.blur_prob)) {
    out = gaussian_blur(out, rng.uniform(cfg.blur_sigma.min, cfg.blur_sigma.max));
    changed = true;
  }
  if (rng.bernoulli(cfg.noise_prob)) {
    add_noise(out, rng.uniform(cfg.noise_sigma.min, cfg.noise_sigma.max), rng);
    changed = true;
  }
  if (rng.bernoulli(cfg.brightness_prob)) {
    const auto delta = static_cast<float>(rng.uniform(cfg.brightness.min, cfg.brightness.max));
    for (float& p : out.pixels) p += delta;
    changed = true;
  }
  if (rng.bernoulli(cfg.contrast_prob)) {
    const double gain = rng.uniform(cfg.contrast.min, cfg.contrast.max);
    const double mean = out.mean();
    for (float& p : out.pixels) p = static_cast<float>(mean + gain * (p - mean));
    changed = true;
  }
  if (rng.bernoulli(cfg.cutout_prob)) {
    const int count = rng.uniform_int(cfg.cutout_count.min, cfg.cutout_count.max);
    std::vector<CutoutRect> rects;
    for (int i = 0; i < count; ++i) {
      const int rw = rng.uniform_int(cfg.cutout_size.min, cfg.cutout_size.max);
      const int rh = rng.uniform_int(cfg.cutout_size.min, cfg.cutout_size.max);
      const int x0 = rng.uniform_int(0, std::max(0, out.width - rw));
      const int y0 = rng.uniform_int(0, std::max(0, out.height - rh));
      rects.push_back({x0, y0, x0 + rw, y0 + rh});
    }
    const float fill =
        cfg.cutout_fill >= 0.0 ? static_cast<float>(cfg.cutout_fill) : static_cast<float>(out.mean());
    apply_cutout(out, rects, fill);
    changed = true;
  }
  if (changed) clamp_pixels(out);
  return out;
}

}  // namespace spnet
