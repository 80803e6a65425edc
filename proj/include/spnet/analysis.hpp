#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spnet/annotations.hpp"
#include "spnet/errors.hpp"

namespace spnet {

struct Rect {
  double x0, y0, x1, y1;
};

/// A named drum note and the image region where its antinode appears.
struct NoteRegion {
  std::string label;
  std::optional<Ellipse> ellipse_roi;
  std::optional<Rect> rect_roi;
  std::optional<double> expected_freq;

  bool contains(double x, double y) const;
};

struct RingSeries {
  std::vector<double> times;  // seconds, uniform spacing
  std::vector<double> rings;
  std::string source;
};

/// Per frame, the ring count of the most confident detection whose centre
/// lies in the region; 0 when the frame has none. Throws EmptySeries when no
/// frame has a detection in the region and ConfigError for frame_rate ≤ 0.
RingSeries assemble_series(const std::vector<std::vector<Detection>>& frames,
                           const NoteRegion& region, double frame_rate);

struct FitResult {
  double amplitude = 0.0;  // rings
  double freq_hz = 0.0;
  double phase = 0.0;  // radians
  double residual_rms = 0.0;
  int iterations = 0;
};

class FitDiverged : public Error {
 public:
  FitDiverged(const std::string& what, FitResult best) : Error(what), best_(best) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

/// Least-squares fit of r(t) = |A cos(2πf t + φ)|. The initial frequency is
/// half the dominant peak of the power spectrum of r², refined by
/// Levenberg-Marquardt until the relative parameter change falls below 1e-8
/// (at most 200 iterations). Throws NoOscillation for flat or too-short
/// series and FitDiverged (with the best iterate) when refinement fails.
FitResult fit_abs_cos(const RingSeries& series);

struct AreaRow {
  int frame;
  double area_px2;
  double rings;
};

struct Ecc2Row {
  int frame;
  double ecc2;
  double rings;
};

/// One row per detection, area from the raw predicted axes.
std::vector<AreaRow> export_area_vs_rings(const std::vector<std::vector<Detection>>& frames,
                                          const std::vector<int>& frame_indices);

/// One row per detection with 1 − b²/a² on raw axes (negative when b > a).
/// Detections with a = 0 are skipped; `skipped` receives their count.
std::vector<Ecc2Row> export_ecc2_vs_rings(const std::vector<std::vector<Detection>>& frames,
                                          const std::vector<int>& frame_indices,
                                          std::size_t* skipped = nullptr);

std::string area_csv(const std::vector<AreaRow>& rows);
std::string ecc2_csv(const std::vector<Ecc2Row>& rows);
std::string fit_csv_header();
std::string fit_csv_row(const std::string& note, const FitResult& fit);

/// Parses `label:ellipse:cx,cy,a,b,theta` or `label:rect:x0,y0,x1,y1`,
/// optionally followed by `:freq_hz`. Throws ConfigError.
NoteRegion parse_region(const std::string& text);

}  // namespace spnet
