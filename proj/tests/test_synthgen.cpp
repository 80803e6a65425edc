#include <openssl/evp.h>

#include <cmath>
#include <map>

#include "doctest.h"
#include "spnet/errors.hpp"
#include "spnet/synthgen.hpp"
#include "test_util.hpp"

using namespace spnet;
namespace fs = std::filesystem;

namespace {

SceneConfig clean_config(std::uint64_t seed) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.axis = {40.0, 90.0};
  cfg.min_pixels_per_ring = 8.0;
  cfg.noise_sigma = 0.0;
  cfg.blur_sigma = 0.0;
  cfg.background_waves = {0, 0};
  return cfg;
}

// Local maxima of a sampled profile, ignoring wiggles smaller than `prominence`.
int count_maxima(const std::vector<double>& v, double prominence) {
  int count = 0;
  bool rising = true;
  double extreme = v.empty() ? 0.0 : v[0];
  for (double x : v) {
    if (rising) {
      if (x > extreme) extreme = x;
      else if (x < extreme - prominence) { ++count; rising = false; extreme = x; }
    } else {
      if (x < extreme) extreme = x;
      else if (x > extreme + prominence) { rising = true; extreme = x; }
    }
  }
  return count;
}

std::string sha256_file(const fs::path& file) {
  const std::string data = testing::slurp(file);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) {
      out[fs::relative(entry.path(), root).generic_string()] = sha256_file(entry.path());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("zero antinodes gives a background-only scene") {
  SceneConfig cfg;
  cfg.n_antinodes = {0, 0};
  const Scene s = generate_scene(cfg);
  CHECK(s.annotations.empty());
  CHECK(s.image.width == 512);
  CHECK(s.image.height == 384);
}

TEST_CASE("scenes are a pure function of the config") {
  for (std::uint64_t seed : {1ull, 2ull, 77ull}) {
    SceneConfig cfg;
    cfg.seed = seed;
    const Scene a = generate_scene(cfg);
    const Scene b = generate_scene(cfg);
    CHECK(a.image == b.image);
    CHECK(a.annotations == b.annotations);
  }
  SceneConfig c1, c2;
  c1.seed = 1;
  c2.seed = 2;
  CHECK_FALSE(generate_scene(c1).image == generate_scene(c2).image);
}

TEST_CASE("pixels are 8-bit integers and annotations are normalized and inside the frame") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneConfig cfg = SceneConfig::desk();
    cfg.seed = seed;
    const Scene s = generate_scene(cfg);
    for (float p : s.image.pixels) {
      CHECK(p >= 0.0f);
      CHECK(p <= 255.0f);
      CHECK(p == std::round(p));
    }
    for (const auto& a : s.annotations) {
      CHECK(a.ellipse.a >= a.ellipse.b);
      CHECK(a.ellipse.theta >= 0.0);
      CHECK(a.ellipse.theta < 180.0);
      const auto [hx, hy] = bounding_half_extents(a.ellipse);
      CHECK(a.ellipse.cx - hx >= 0.0);
      CHECK(a.ellipse.cx + hx <= cfg.width - 1);
      CHECK(a.ellipse.cy - hy >= 0.0);
      CHECK(a.ellipse.cy + hy <= cfg.height - 1);
    }
  }
}

TEST_CASE("fringe profile has one maximum per ring") {
  for (int r = 1; r <= 11; ++r) {
    std::vector<double> v;
    for (int i = 0; i <= 20000; ++i) v.push_back(fringe_profile(i / 20000.0, r));
    CHECK(count_maxima(v, 1e-3) == r);
  }
}

TEST_CASE("rendered ring count matches the label along the major axis") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Scene s = generate_scene(clean_config(seed));
    for (const auto& ann : s.annotations) {
      const Ellipse& e = ann.ellipse;
      const double t = e.theta * std::numbers::pi / 180.0;
      std::vector<double> profile;
      for (double d = 0.0; d < e.a - 0.5; d += 0.25) {
        profile.push_back(s.image.sample(e.cx + d * std::cos(t), e.cy + d * std::sin(t), 0.0f));
      }
      CHECK(count_maxima(profile, 20.0) == static_cast<int>(ann.rings));
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("placement failure raises PlacementError") {
  SceneConfig cfg;
  cfg.width = 100;
  cfg.height = 100;
  cfg.axis = {40.0, 45.0};
  cfg.rings = {1, 3};
  cfg.n_antinodes = {5, 5};
  cfg.max_retries = 50;
  CHECK_THROWS_AS(generate_scene(cfg), PlacementError);
}

TEST_CASE("invalid configs are rejected") {
  SceneConfig cfg;
  cfg.rings = {5, 2};
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
  cfg = SceneConfig{};
  cfg.rings = {1, 40};
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
}

TEST_CASE("generate_dataset writes images, CSVs and a manifest") {
  const auto dir = testing::scratch_dir("gen3");
  SceneConfig cfg = SceneConfig::desk();
  cfg.seed = 5;
  const DatasetManifest m = generate_dataset(cfg, 3, dir);
  CHECK(m.records.size() == 3);
  int pngs = 0, csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "images")) pngs += e.path().extension() == ".png";
  for (const auto& e : fs::directory_iterator(dir / "annotations")) csvs += e.path().extension() == ".csv";
  CHECK(pngs == 3);
  CHECK(csvs == 3);
  CHECK(fs::exists(dir / "manifest.csv"));

  const DatasetManifest back = read_annotations(dir);
  CHECK(back.records.size() == 3);
  for (const auto& r : back.records) {
    const Image img = read_png((dir / r.image_path).string());
    const Scene s = generate_scene(scene_config_for_index(cfg, static_cast<std::uint64_t>(r.frame_index)));
    CHECK(img == s.image);
  }

  const auto empty = testing::scratch_dir("gen0");
  CHECK(generate_dataset(cfg, 0, empty).records.empty());
  CHECK(read_annotations(empty).records.empty());
}

TEST_CASE("fixed seed gives identical file hashes across runs") {
  SceneConfig cfg = SceneConfig::desk();
  cfg.seed = 1234;
  const auto d1 = testing::scratch_dir("gen_hash1");
  const auto d2 = testing::scratch_dir("gen_hash2");
  generate_dataset(cfg, 6, d1);
  generate_dataset(cfg, 6, d2);
  const auto h1 = hash_tree(d1);
  CHECK(h1.size() == 6 + 6 + 2);
  CHECK(h1 == hash_tree(d2));
}

TEST_CASE("style hook") {
  SceneConfig cfg = SceneConfig::desk();
  cfg.seed = 3;
  const Scene s = generate_scene(cfg);
  CHECK(style_hook(s.image) == s.image);

  const Image gamma = style_hook(s.image, [](const Image& in) {
    Image out = in;
    for (float& p : out.pixels) p = static_cast<float>(255.0 * std::pow(p / 255.0, 0.8));
    return out;
  });
  CHECK(gamma.width == s.image.width);

  const Image blurred = style_hook(s.image, [](const Image& in) { return gaussian_blur(in, 2.0); });
  CHECK_FALSE(blurred == s.image);

  const auto dir = testing::scratch_dir("style");
  write_frame_csv(dir / "before.csv", s.annotations);
  write_frame_csv(dir / "after.csv", s.annotations);
  CHECK(testing::slurp(dir / "before.csv") == testing::slurp(dir / "after.csv"));
}
