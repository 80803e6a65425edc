#include "spnet/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "spnet/errors.hpp"
#include "spnet/rng.hpp"

namespace spnet {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
  double amplitude, kx, ky, phase;
};

template <typename T>
void require_range(const Range<T>& r, const char* name) {
  if (!(r.min <= r.max)) throw ConfigError(std::string("empty range: ") + name);
}

std::string image_filename(int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "images/frame_%06d.png", index);
  return buf;
}

}  // namespace

void SceneConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("image size must be positive");
  require_range(n_antinodes, "n_antinodes");
  require_range(rings, "rings");
  require_range(axis, "axis");
  require_range(aspect, "aspect");
  require_range(background_waves, "background_waves");
  require_range(wave_amplitude, "wave_amplitude");
  require_range(wave_period, "wave_period");
  if (n_antinodes.min < 0) throw ConfigError("n_antinodes must be >= 0");
  if (rings.min < 1) throw ConfigError("rings must be >= 1");
  if (background_waves.min < 0) throw ConfigError("background_waves must be >= 0");
  if (axis.min <= 0.0) throw ConfigError("axis range must be positive");
  if (aspect.min <= 0.0 || aspect.max > 1.0) throw ConfigError("aspect range must lie in (0, 1]");
  if (wave_period.min <= 0.0) throw ConfigError("wave period must be positive");
  if (min_pixels_per_ring * rings.max > axis.max) {
    throw ConfigError("largest ring count does not fit in the largest axis at min_pixels_per_ring");
  }
  if (2.0 * (axis.max + margin) > std::min(width, height)) {
    throw ConfigError("axis range too large for the image");
  }
  if (noise_sigma < 0.0 || blur_sigma < 0.0) throw ConfigError("noise/blur must be >= 0");
  if (grid_rows <= 0 || grid_cols <= 0 || max_per_cell <= 0) {
    throw ConfigError("grid and cell capacity must be positive");
  }
}

SceneConfig SceneConfig::desk(int size) {
  SceneConfig cfg;
  const double s = size / 64.0;
  cfg.width = size;
  cfg.height = size;
  cfg.n_antinodes = {1, 3};
  cfg.rings = {1, 5};
  cfg.axis = {7.0 * s, 18.0 * s};
  cfg.aspect = {0.5, 1.0};
  cfg.min_pixels_per_ring = 3.0 * s;
  cfg.background_waves = {2, 4};
  cfg.wave_amplitude = {4.0, 15.0};
  cfg.wave_period = {30.0 * s, 120.0 * s};
  cfg.noise_sigma = 6.0;
  cfg.blur_sigma = 0.5;
  cfg.margin = 1.0;
  cfg.min_gap = 1.0;
  return cfg;
}

double fringe_profile(double rho, double rings) {
  return 0.5 * (1.0 - std::cos(kTwoPi * rings * rho));
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x5ce9e));

  // Placement first so the pixel draws do not depend on retry counts.
  const int n = rng.uniform_int(cfg.n_antinodes.min, cfg.n_antinodes.max);
  std::vector<Annotation> placed;
  std::vector<int> cell_count(static_cast<std::size_t>(cfg.grid_rows * cfg.grid_cols), 0);
  const double cw = static_cast<double>(cfg.width) / cfg.grid_cols;
  const double ch = static_cast<double>(cfg.height) / cfg.grid_rows;
  for (int k = 0; k < n; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_retries && !ok; ++attempt) {
      const int rings = rng.uniform_int(cfg.rings.min, cfg.rings.max);
      const double a_lo = std::max(cfg.axis.min, cfg.min_pixels_per_ring * rings);
      Ellipse e;
      e.a = rng.uniform(a_lo, cfg.axis.max);
      e.b = e.a * rng.uniform(cfg.aspect.min, cfg.aspect.max);
      e.theta = rng.uniform(0.0, 180.0);
      const auto [hx, hy] = bounding_half_extents(e);
      const double x_lo = hx + cfg.margin;
      const double x_hi = cfg.width - 1 - hx - cfg.margin;
      const double y_lo = hy + cfg.margin;
      const double y_hi = cfg.height - 1 - hy - cfg.margin;
      if (x_lo > x_hi || y_lo > y_hi) continue;
      e.cx = rng.uniform(x_lo, x_hi);
      e.cy = rng.uniform(y_lo, y_hi);
      const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const Annotation& p) {
        return std::hypot(p.ellipse.cx - e.cx, p.ellipse.cy - e.cy) <
               p.ellipse.a + e.a + cfg.min_gap;
      });
      if (overlaps) continue;
      const int col = std::clamp(static_cast<int>(std::floor(e.cx / cw)), 0, cfg.grid_cols - 1);
      const int row = std::clamp(static_cast<int>(std::floor(e.cy / ch)), 0, cfg.grid_rows - 1);
      int& count = cell_count[static_cast<std::size_t>(row * cfg.grid_cols + col)];
      if (count >= cfg.max_per_cell) continue;
      ++count;
      placed.push_back({normalize(e), static_cast<double>(rings), true});
      ok = true;
    }
    if (!ok) {
      throw PlacementError("could not place antinode " + std::to_string(k + 1) + " of " +
                           std::to_string(n) + " after " + std::to_string(cfg.max_retries) +
                           " attempts");
    }
  }

  std::vector<Wave> waves(static_cast<std::size_t>(
      rng.uniform_int(cfg.background_waves.min, cfg.background_waves.max)));
  for (Wave& w : waves) {
    const double dir = rng.uniform(0.0, kTwoPi);
    const double period = rng.uniform(cfg.wave_period.min, cfg.wave_period.max);
    w.amplitude = rng.uniform(cfg.wave_amplitude.min, cfg.wave_amplitude.max);
    w.kx = kTwoPi * std::cos(dir) / period;
    w.ky = kTwoPi * std::sin(dir) / period;
    w.phase = rng.uniform(0.0, kTwoPi);
  }

  Image img(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      double v = cfg.background_level;
      for (const Wave& w : waves) v += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
      img.at(x, y) = static_cast<float>(v);
    }
  }

  for (const Annotation& ann : placed) {
    const Ellipse& e = ann.ellipse;
    const double t = e.theta * std::numbers::pi / 180.0;
    const double c = std::cos(t);
    const double s = std::sin(t);
    const auto [hx, hy] = bounding_half_extents(e);
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - hx)));
    const int x1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(e.cx + hx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - hy)));
    const int y1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(e.cy + hy)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - e.cx;
        const double dy = y - e.cy;
        const double u = (dx * c + dy * s) / e.a;
        const double v = (-dx * s + dy * c) / e.b;
        const double rho = std::sqrt(u * u + v * v);
        if (rho >= 1.0) continue;
        img.at(x, y) += static_cast<float>(cfg.fringe_amplitude * fringe_profile(rho, ann.rings));
      }
    }
  }

  if (cfg.noise_sigma > 0.0) {
    for (float& p : img.pixels) p += static_cast<float>(rng.normal(0.0, cfg.noise_sigma));
  }
  if (cfg.blur_sigma > 0.0) img = gaussian_blur(img, cfg.blur_sigma);
  quantize(img);
  return {std::move(img), std::move(placed)};
}

SceneConfig scene_config_for_index(const SceneConfig& cfg, std::uint64_t index) {
  SceneConfig c = cfg;
  c.seed = derive_seed(cfg.seed, 0xda7a5e7, index);
  return c;
}

DatasetManifest generate_dataset(const SceneConfig& cfg, int n_images, const fs::path& out_dir,
                                 const SplitFractions& fractions) {
  cfg.validate();
  if (n_images < 0) throw ConfigError("image count must be >= 0");
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create directory " + (out_dir / "images").string());

  DatasetManifest manifest;
  manifest.name = "synthetic";
  manifest.image_width = cfg.width;
  manifest.image_height = cfg.height;
  for (int i = 0; i < n_images; ++i) {
    const Scene scene = generate_scene(scene_config_for_index(cfg, static_cast<std::uint64_t>(i)));
    const std::string image_path = image_filename(i);
    write_png(scene.image, (out_dir / image_path).string());
    manifest.records.push_back({image_path, i, scene.annotations, Split::train});
  }
  manifest = merge_splits(split_dataset(manifest, fractions, cfg.seed));
  write_annotations(manifest, out_dir);
  return manifest;
}

Image style_hook(const Image& image, const Styler& styler) {
  return styler ? styler(image) : image;
}

}  // namespace spnet
