#include <cmath>
#include <numbers>

#include "doctest.h"
#include "spnet/analysis.hpp"
#include "spnet/errors.hpp"
#include "spnet/rng.hpp"

using namespace spnet;

namespace {

RingSeries abs_cos_series(double amplitude, double freq, double phase, double duration,
                          double rate, double noise, std::uint64_t seed) {
  RingSeries s;
  Rng rng(seed);
  const int n = static_cast<int>(std::lround(duration * rate));
  for (int i = 0; i < n; ++i) {
    const double t = i / rate;
    s.times.push_back(t);
    s.rings.push_back(std::abs(amplitude * std::cos(2.0 * std::numbers::pi * freq * t + phase)) +
                      (noise > 0.0 ? rng.normal(0.0, noise) : 0.0));
  }
  return s;
}

NoteRegion rect_region(double x0, double y0, double x1, double y1) {
  NoteRegion r;
  r.label = "n";
  r.rect_roi = Rect{x0, y0, x1, y1};
  return r;
}

}  // namespace

TEST_CASE("fit recovers the octave-note frequencies") {
  for (double f : {596.0, 660.0}) {
    const FitResult fit = fit_abs_cos(abs_cos_series(8.0, f, 0.7, 0.150, 10000.0, 0.3, 1));
    CHECK(std::abs(fit.freq_hz - f) <= 0.01 * f);
    CHECK(std::abs(std::abs(fit.amplitude) - 8.0) <= 0.2);
  }
}

TEST_CASE("noiseless fits are accurate across the band") {
  Rng rng(4);
  for (double f = 100.0; f <= 1000.0; f += 75.0) {
    const double amp = rng.uniform(2.0, 10.0);
    const FitResult fit =
        fit_abs_cos(abs_cos_series(amp, f, rng.uniform(0, 3), 0.150, 5000.0, 0.0, 0));
    CHECK(std::abs(fit.freq_hz - f) <= 1e-3 * f);
    CHECK(std::abs(std::abs(fit.amplitude) - amp) <= 1e-3 * amp);
    CHECK(fit.residual_rms < 1e-6);
  }
}

TEST_CASE("flat and short series have no oscillation") {
  RingSeries flat;
  for (int i = 0; i < 100; ++i) {
    flat.times.push_back(i * 1e-4);
    flat.rings.push_back(3.0);
  }
  CHECK_THROWS_AS(fit_abs_cos(flat), NoOscillation);
  CHECK_THROWS_AS(fit_abs_cos(abs_cos_series(5.0, 600.0, 0.0, 0.0003, 10000.0, 0.0, 0)),
                  NoOscillation);
}

TEST_CASE("series assembly") {
  const NoteRegion roi = rect_region(0, 0, 100, 100);
  std::vector<std::vector<Detection>> frames{
      {{{50, 50, 10, 8, 0}, 3.0, 0.9}, {{60, 60, 10, 8, 0}, 5.0, 0.95}, {{300, 50, 10, 8, 0}, 9.0, 1.0}},
      {},
      {{{20, 20, 10, 8, 0}, 2.0, 0.6}}};
  const RingSeries s = assemble_series(frames, roi, 1000.0);
  REQUIRE(s.rings.size() == 3);
  CHECK(s.rings[0] == 5.0);
  CHECK(s.rings[1] == 0.0);
  CHECK(s.rings[2] == 2.0);
  CHECK(s.times[2] == doctest::Approx(0.002));

  const NoteRegion elsewhere = rect_region(400, 300, 500, 380);
  CHECK_THROWS_AS(assemble_series(frames, elsewhere, 1000.0), EmptySeries);
  CHECK_THROWS_AS(assemble_series(frames, roi, 0.0), ConfigError);

  NoteRegion ell;
  ell.ellipse_roi = Ellipse{50, 50, 20, 20, 0};
  CHECK(ell.contains(60, 55));
  CHECK_FALSE(ell.contains(20, 20));
}

TEST_CASE("area and eccentricity exports") {
  CHECK(export_area_vs_rings({}, {}).empty());
  const std::vector<std::vector<Detection>> frames{
      {{{10, 10, 2, 1, 0}, 3.0, 0.9}, {{30, 30, 4, 4, 0}, 1.0, 0.9}},
      {{{10, 10, 1, 2, 0}, 2.0, 0.9}, {{10, 10, 0, 2, 0}, 2.0, 0.9}}};
  const auto area = export_area_vs_rings(frames, {7, 8});
  REQUIRE(area.size() == 4);
  CHECK(area[0].frame == 7);
  CHECK(area[0].area_px2 == doctest::Approx(2.0 * std::numbers::pi));
  CHECK(area[0].rings == 3.0);

  std::size_t skipped = 0;
  const auto ecc = export_ecc2_vs_rings(frames, {7, 8}, &skipped);
  REQUIRE(ecc.size() == 3);
  CHECK(skipped == 1);
  CHECK(ecc[0].ecc2 == doctest::Approx(0.75));
  CHECK(ecc[1].ecc2 == 0.0);
  CHECK(ecc[2].ecc2 < 0.0);
  CHECK(area_csv(area).rfind("frame,area_px2,rings\n", 0) == 0);
  CHECK(ecc2_csv(ecc).rfind("frame,ecc2,rings\n", 0) == 0);
  CHECK(fit_csv_header() == "note,A,f_hz,phase_rad,residual_rms");
}

TEST_CASE("region parsing") {
  const NoteRegion e = parse_region("C5:ellipse:100,120,30,20,45:596");
  CHECK(e.label == "C5");
  REQUIRE(e.ellipse_roi);
  CHECK(e.ellipse_roi->a == 30.0);
  CHECK(e.expected_freq == 596.0);
  const NoteRegion r = parse_region("oct:rect:0,0,256,384");
  REQUIRE(r.rect_roi);
  CHECK(r.rect_roi->x1 == 256.0);
  CHECK_FALSE(r.expected_freq);
  CHECK_THROWS_AS(parse_region("x:circle:1,2,3"), ConfigError);
  CHECK_THROWS_AS(parse_region("x:rect:1,2"), ConfigError);
}
