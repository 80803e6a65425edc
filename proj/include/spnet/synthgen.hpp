#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "spnet/annotations.hpp"
#include "spnet/image.hpp"

namespace spnet {

template <typename T>
struct Range {
  T min;
  T max;
};

/// Parameters of the fake-ESPI scene generator.
struct SceneConfig {
  int width = 512;
  int height = 384;
  Range<int> n_antinodes{1, 6};
  Range<int> rings{1, 11};
  Range<double> axis{20.0, 90.0};           // semi-major axis, pixels
  Range<double> aspect{0.45, 1.0};          // b / a
  double min_pixels_per_ring = 3.0;         // a ≥ this · rings
  double fringe_amplitude = 150.0;          // gray levels added at a bright fringe
  double background_level = 50.0;
  Range<int> background_waves{2, 5};
  Range<double> wave_amplitude{5.0, 20.0};  // gray levels
  Range<double> wave_period{80.0, 400.0};   // pixels
  double noise_sigma = 8.0;
  double blur_sigma = 0.7;
  double margin = 2.0;                      // min distance from ellipse bbox to border
  double min_gap = 2.0;                     // min gap between bounding circles
  int max_retries = 500;
  // Placement keeps every frame encodable on this grid.
  int grid_rows = 6;
  int grid_cols = 6;
  int max_per_cell = 2;
  std::uint64_t seed = 0;

  /// Throws ConfigError on empty ranges or a ring range that cannot fit the axis range.
  void validate() const;

  /// Small square scenes used for desk-scale training (default 64×64).
  static SceneConfig desk(int size = 64);
};

struct Scene {
  Image image;
  std::vector<Annotation> annotations;
};

/// Pure function of cfg (including its seed). Pixels are quantized to
/// integers in [0, 255] so the image equals its PNG round trip.
/// Throws PlacementError when antinodes cannot be placed within max_retries.
Scene generate_scene(const SceneConfig& cfg);

/// Fringe intensity in [0, 1] at normalized elliptical radius rho ∈ [0, 1]:
/// ½(1 − cos 2π·r·ρ), which has exactly r bright maxima inside the ellipse.
double fringe_profile(double rho, double rings);

/// Writes `n_images` scenes as images/frame_XXXXXX.png plus annotation CSVs and
/// the manifest, splitting frames by `fractions`. Scene i uses a sub-seed
/// derived from (cfg.seed, i), so output is independent of generation order.
DatasetManifest generate_dataset(const SceneConfig& cfg, int n_images,
                                 const std::filesystem::path& out_dir,
                                 const SplitFractions& fractions = {});

/// Scene config used for image `index` of a dataset seeded with cfg.seed.
SceneConfig scene_config_for_index(const SceneConfig& cfg, std::uint64_t index);

using Styler = std::function<Image(const Image&)>;

/// Applies a caller-supplied image→image restyling (identity by default).
/// Annotations are untouched by construction.
Image style_hook(const Image& image, const Styler& styler = {});

}  // namespace spnet
