#include "spnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spnet/errors.hpp"

namespace spnet {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Scanlines used by the overlap integral; error in IoU stays well below 1e-3.
constexpr int kScanlines = 4096;

// Quadratic coefficients of the chord of `e` at height y: A dx² + B dx + C ≤ 0.
struct ChordQuadratic {
  double A, Bcoef, Ccoef;  // Bcoef/Ccoef multiply dy and dy² respectively.
};

ChordQuadratic chord_quadratic(const Ellipse& e) {
  const double t = e.theta * kDegToRad;
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double ia2 = 1.0 / (e.a * e.a);
  const double ib2 = 1.0 / (e.b * e.b);
  return {c * c * ia2 + s * s * ib2, 2.0 * c * s * (ia2 - ib2), s * s * ia2 + c * c * ib2};
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool empty = true;
  double length() const { return empty ? 0.0 : hi - lo; }
};

Interval chord(const Ellipse& e, const ChordQuadratic& q, double y) {
  const double dy = y - e.cy;
  const double B = q.Bcoef * dy;
  const double C = q.Ccoef * dy * dy - 1.0;
  const double disc = B * B - 4.0 * q.A * C;
  if (disc <= 0.0) return {};
  const double root = std::sqrt(disc);
  return {e.cx + (-B - root) / (2.0 * q.A), e.cx + (-B + root) / (2.0 * q.A), false};
}

void require_positive_axes(const Ellipse& e) {
  if (!(e.a > 0.0) || !(e.b > 0.0) || !std::isfinite(e.a) || !std::isfinite(e.b)) {
    throw InvalidEllipse("ellipse axes must be positive and finite");
  }
}

// Sums chord intersection and union lengths over scanlines spanning both ellipses.
std::pair<double, double> overlap_integrals(const Ellipse& e1, const Ellipse& e2) {
  const auto [hx1, hy1] = bounding_half_extents(e1);
  const auto [hx2, hy2] = bounding_half_extents(e2);
  const double y0 = std::min(e1.cy - hy1, e2.cy - hy2);
  const double y1 = std::max(e1.cy + hy1, e2.cy + hy2);
  const double h = (y1 - y0) / kScanlines;
  const ChordQuadratic q1 = chord_quadratic(e1);
  const ChordQuadratic q2 = chord_quadratic(e2);
  double inter = 0.0;
  double uni = 0.0;
  for (int i = 0; i < kScanlines; ++i) {
    const double y = y0 + (i + 0.5) * h;
    const Interval c1 = chord(e1, q1, y);
    const Interval c2 = chord(e2, q2, y);
    double overlap = 0.0;
    if (!c1.empty && !c2.empty) {
      overlap = std::max(0.0, std::min(c1.hi, c2.hi) - std::max(c1.lo, c2.lo));
    }
    inter += overlap;
    uni += c1.length() + c2.length() - overlap;
  }
  return {inter * h, uni * h};
}

}  // namespace

double wrap_half_turn(double degrees) {
  double w = std::fmod(degrees, 180.0);
  if (w < 0.0) w += 180.0;
  if (w >= 180.0) w -= 180.0;
  return w;
}

Ellipse normalize(const Ellipse& e) {
  require_positive_axes(e);
  Ellipse out = e;
  if (out.a < out.b) {
    std::swap(out.a, out.b);
    out.theta -= 90.0;
  }
  out.theta = wrap_half_turn(out.theta);
  return out;
}

AngleCode angle_encode(double theta_deg) {
  const double t = 2.0 * theta_deg * kDegToRad;
  return {std::cos(t), std::sin(t)};
}

double angle_decode(double c, double s) {
  if (c == 0.0 && s == 0.0) throw DegenerateAngle("angle code (0, 0) has no direction");
  return wrap_half_turn(0.5 * std::atan2(s, c) * kRadToDeg);
}

double area(const Ellipse& e) { return std::numbers::pi * e.a * e.b; }

double ecc_squared(double a, double b) {
  if (a == 0.0) throw InvalidEllipse("eccentricity undefined for a = 0");
  return 1.0 - (b * b) / (a * a);
}

bool contains(const Ellipse& e, double x, double y) {
  const double t = e.theta * kDegToRad;
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double u = dx * std::cos(t) + dy * std::sin(t);
  const double v = -dx * std::sin(t) + dy * std::cos(t);
  return (u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0;
}

std::pair<double, double> bounding_half_extents(const Ellipse& e) {
  const double t = e.theta * kDegToRad;
  const double c = std::cos(t);
  const double s = std::sin(t);
  return {std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s),
          std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c)};
}

double intersection_area(const Ellipse& e1, const Ellipse& e2) {
  require_positive_axes(e1);
  require_positive_axes(e2);
  return overlap_integrals(e1, e2).first;
}

double ellipse_iou(const Ellipse& e1, const Ellipse& e2) {
  require_positive_axes(e1);
  require_positive_axes(e2);
  const auto [hx1, hy1] = bounding_half_extents(e1);
  const auto [hx2, hy2] = bounding_half_extents(e2);
  if (std::abs(e1.cx - e2.cx) >= hx1 + hx2 || std::abs(e1.cy - e2.cy) >= hy1 + hy2) return 0.0;
  const auto [inter, uni] = overlap_integrals(e1, e2);
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace spnet
