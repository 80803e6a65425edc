#pragma once

#include <utility>

namespace spnet {

/// An ellipse in pixel coordinates (x right, y down).
///
/// `theta` is the angle in degrees from the +x axis to the semi-major axis,
/// measured in pixel coordinates, so the axis direction is (cos θ, sin θ).
/// Raw ellipses may have a < b and any finite theta; normalize() brings them
/// into the canonical form a ≥ b, θ ∈ [0, 180).
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;

  friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

/// Wraps an angle in degrees into [0, 180).
double wrap_half_turn(double degrees);

/// Canonical form with a ≥ b and theta in [0, 180). Throws InvalidEllipse on
/// a nonpositive or non-finite axis.
Ellipse normalize(const Ellipse& e);

struct AngleCode {
  double c;
  double s;
};

/// (cos 2θ, sin 2θ); identical for θ and θ + 180°.
AngleCode angle_encode(double theta_deg);

/// Inverse of angle_encode, result in [0, 180). Throws DegenerateAngle for (0, 0).
double angle_decode(double c, double s);

double area(const Ellipse& e);

/// 1 − b²/a² on raw axes; negative when b > a. Throws InvalidEllipse if a == 0.
double ecc_squared(double a, double b);

/// Whether (x, y) lies inside or on the ellipse.
bool contains(const Ellipse& e, double x, double y);

/// Half-extents of the axis-aligned bounding box.
std::pair<double, double> bounding_half_extents(const Ellipse& e);

/// Area of intersection of two ellipses. Integrates exact chord overlaps on a
/// grid of horizontal scanlines spanning the common vertical extent.
double intersection_area(const Ellipse& e1, const Ellipse& e2);

/// Intersection over union in [0, 1].
double ellipse_iou(const Ellipse& e1, const Ellipse& e2);

}  // namespace spnet
