#pragma once

#include <cstdint>
#include <vector>

#include "spnet/annotations.hpp"
#include "spnet/image.hpp"
#include "spnet/rng.hpp"
#include "spnet/synthgen.hpp"

namespace spnet {

/// Geometric (stage 1) and photometric (stage 2) augmentation settings.
struct AugmentConfig {
  // Stage 1: applied to image and annotations together, as preprocessing.
  Range<double> rotation_deg{-10.0, 10.0};
  Range<double> translation_px{-40.0, 40.0};
  bool reflect_horizontal = true;  // each enabled flip happens with probability ½
  bool reflect_vertical = true;
  double stage1_noise_prob = 0.5;
  Range<double> stage1_noise_sigma{0.0, 6.0};
  double stage1_blur_prob = 0.3;
  Range<double> stage1_blur_sigma{0.3, 1.0};
  int stage1_copies = 41;

  // Stage 2: images only, redrawn every epoch.
  double blur_prob = 0.3;
  Range<double> blur_sigma{0.3, 1.2};
  double noise_prob = 0.5;
  Range<double> noise_sigma{1.0, 8.0};
  double cutout_prob = 0.5;
  Range<int> cutout_count{1, 3};
  Range<int> cutout_size{4, 24};  // rectangle side, pixels
  double cutout_fill = -1.0;      // negative: fill with the image mean
  double brightness_prob = 0.5;
  Range<double> brightness{-20.0, 20.0};  // additive gray levels
  double contrast_prob = 0.5;
  Range<double> contrast{0.8, 1.2};  // gain about the image mean

  std::uint64_t seed = 0;

  /// Every transform disabled; both stages are then the identity.
  static AugmentConfig none();
  /// Translations and cutout sizes scaled for small (e.g. 64×64) scenes.
  static AugmentConfig desk(int size = 64);
};

/// Reflection, then rotation about the image centre, then translation.
struct RigidTransform {
  double rotation_deg = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
};

/// Generator for (frame, epoch); stage 1 uses the copy index as the epoch.
Rng augment_rng(const AugmentConfig& cfg, std::uint64_t frame_index, std::uint64_t epoch);

RigidTransform sample_rigid(const AugmentConfig& cfg, Rng& rng);

/// Warps pixels (bilinear, edge fill = original image mean) and maps every
/// annotation through the same transform; antinodes whose centre leaves the
/// frame are dropped. Ring counts are preserved.
Scene apply_rigid(const Scene& frame, const RigidTransform& t);

/// Maps an ellipse through the transform on a width×height frame.
Ellipse transform_ellipse(const Ellipse& e, const RigidTransform& t, int width, int height);

Scene stage1_apply(const Scene& frame, const AugmentConfig& cfg, Rng& rng);

struct CutoutRect {
  int x0, y0, x1, y1;  // half-open
};

/// Photometric changes only; annotations are not an input.
Image stage2_apply(const Image& image, const AugmentConfig& cfg, Rng& rng);

/// Fills each rectangle with `fill` (clipped to the frame).
void apply_cutout(Image& image, const std::vector<CutoutRect>& rects, float fill);

}  // namespace spnet
