#include <cmath>

#include "doctest.h"
#include "spnet/augment.hpp"

using namespace spnet;

namespace {

Image rasterize(const Ellipse& e, int w, int h) {
  Image img(w, h, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (contains(e, x, y)) img.at(x, y) = 255.0f;
    }
  }
  return img;
}

// Pixels where the thresholded warp and the rasterized mapped ellipse disagree.
int mask_mismatch(const Image& warped, const Image& expected) {
  int bad = 0;
  for (std::size_t i = 0; i < warped.pixels.size(); ++i) {
    bad += (warped.pixels[i] > 127.5f) != (expected.pixels[i] > 127.5f);
  }
  return bad;
}

Scene test_scene(std::uint64_t seed) {
  SceneConfig cfg = SceneConfig::desk(96);
  cfg.seed = seed;
  return generate_scene(cfg);
}

}  // namespace

TEST_CASE("identity transform leaves the frame unchanged") {
  const Scene s = test_scene(1);
  const Scene out = apply_rigid(s, RigidTransform{});
  CHECK(out.image == s.image);
  CHECK(out.annotations == s.annotations);

  const AugmentConfig none = AugmentConfig::none();
  Rng rng = augment_rng(none, 0, 0);
  const Scene s1 = stage1_apply(s, none, rng);
  CHECK(s1.image == s.image);
  CHECK(s1.annotations == s.annotations);
}

TEST_CASE("pure translation shifts centres only") {
  const Ellipse e{100, 150, 30, 12, 35};
  const Ellipse moved = transform_ellipse(e, {0.0, 40.0, 0.0, false, false}, 512, 384);
  CHECK(moved.cx == doctest::Approx(140.0));
  CHECK(moved.cy == doctest::Approx(150.0));
  CHECK(moved.a == e.a);
  CHECK(moved.b == e.b);
  CHECK(moved.theta == doctest::Approx(35.0));

  Scene s{Image(512, 384, 10.0f), {{e, 4.0, true}}};
  const Scene out = apply_rigid(s, {0.0, 40.0, 0.0, false, false});
  REQUIRE(out.annotations.size() == 1);
  CHECK(out.annotations[0].ellipse.cx == doctest::Approx(140.0));
  CHECK(out.annotations[0].rings == 4.0);
}

TEST_CASE("horizontal reflection maps cx and theta") {
  const Ellipse e{100, 150, 30, 12, 35};
  const Ellipse f = transform_ellipse(e, {0.0, 0.0, 0.0, true, false}, 512, 384);
  CHECK(f.cx == doctest::Approx(411.0));
  CHECK(f.cy == doctest::Approx(150.0));
  CHECK(f.theta == doctest::Approx(145.0));
}

TEST_CASE("pixel warp agrees with the mapped ellipse") {
  const int w = 128, h = 96;
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const Ellipse e{rng.uniform(45, 83), rng.uniform(35, 61), rng.uniform(10, 25), 0.0,
                    rng.uniform(0, 180)};
    Ellipse el = e;
    el.b = el.a * rng.uniform(0.3, 1.0);
    RigidTransform t;
    t.rotation_deg = rng.uniform(-10, 10);
    t.dx = rng.uniform(-8, 8);
    t.dy = rng.uniform(-8, 8);
    t.flip_horizontal = rng.bernoulli(0.5);
    t.flip_vertical = rng.bernoulli(0.5);
    const Scene s{rasterize(el, w, h), {{el, 3.0, true}}};
    const Scene out = apply_rigid(s, t);
    REQUIRE(out.annotations.size() == 1);
    const Ellipse mapped = out.annotations[0].ellipse;
    const int bad = mask_mismatch(out.image, rasterize(mapped, w, h));
    const double perimeter = 2.0 * std::numbers::pi * el.a;
    CHECK(bad <= perimeter * 0.5);
  }
}

TEST_CASE("pure reflection warp is exact") {
  const int w = 128, h = 96;
  const Ellipse e{40.3, 50.7, 20, 9, 25};
  const Scene s{rasterize(e, w, h), {{e, 2.0, true}}};
  const Scene out = apply_rigid(s, {0.0, 0.0, 0.0, true, false});
  CHECK(mask_mismatch(out.image, rasterize(out.annotations[0].ellipse, w, h)) <= 2);
}

TEST_CASE("antinodes pushed out of frame are dropped") {
  Scene s{Image(64, 64, 0.0f), {{{60, 30, 3, 3, 0}, 1.0, true}, {{10, 30, 3, 3, 0}, 2.0, true}}};
  const Scene out = apply_rigid(s, {0.0, 10.0, 0.0, false, false});
  REQUIRE(out.annotations.size() == 1);
  CHECK(out.annotations[0].rings == 2.0);
}

TEST_CASE("stage 1 preserves ring counts and is deterministic") {
  const AugmentConfig cfg = AugmentConfig::desk(96);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = test_scene(seed);
    Rng r1 = augment_rng(cfg, seed, 3);
    Rng r2 = augment_rng(cfg, seed, 3);
    const Scene a = stage1_apply(s, cfg, r1);
    const Scene b = stage1_apply(s, cfg, r2);
    CHECK(a.image == b.image);
    CHECK(a.annotations == b.annotations);
    for (const auto& out : a.annotations) {
      bool match = false;
      for (const auto& in : s.annotations) {
        match |= in.rings == out.rings && in.ellipse.a == doctest::Approx(out.ellipse.a);
      }
      CHECK(match);
    }
  }
}

TEST_CASE("stage 2 with everything off is the identity") {
  const Scene s = test_scene(2);
  const AugmentConfig none = AugmentConfig::none();
  Rng rng(1);
  CHECK(stage2_apply(s.image, none, rng) == s.image);
}

TEST_CASE("single cutout sets exactly one rectangle") {
  Image img(32, 32, 0.0f);
  for (int i = 0; i < 32 * 32; ++i) img.pixels[i] = static_cast<float>(i % 251);
  Image out = img;
  apply_cutout(out, {{4, 6, 10, 9}}, 7.5f);
  int changed = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const bool inside = x >= 4 && x < 10 && y >= 6 && y < 9;
      if (inside) CHECK(out.at(x, y) == 7.5f);
      else CHECK(out.at(x, y) == img.at(x, y));
      changed += out.at(x, y) != img.at(x, y);
    }
  }
  CHECK(changed <= 18);

  AugmentConfig cfg = AugmentConfig::none();
  cfg.cutout_prob = 1.0;
  cfg.cutout_count = {1, 1};
  cfg.cutout_size = {5, 5};
  cfg.cutout_fill = 255.0;
  Image blank(40, 40, 0.0f);
  Rng rng(9);
  const Image cut = stage2_apply(blank, cfg, rng);
  int white = 0;
  for (float p : cut.pixels) white += p == 255.0f;
  CHECK(white == 25);
}

TEST_CASE("stage 2 keeps dimensions and pixel range") {
  const AugmentConfig cfg = AugmentConfig::desk(96);
  const Scene s = test_scene(4);
  for (std::uint64_t epoch = 0; epoch < 20; ++epoch) {
    Rng rng = augment_rng(cfg, 0, epoch);
    const Image out = stage2_apply(s.image, cfg, rng);
    CHECK(out.width == s.image.width);
    CHECK(out.height == s.image.height);
    for (float p : out.pixels) {
      CHECK(p >= 0.0f);
      CHECK(p <= 255.0f);
    }
  }
}
