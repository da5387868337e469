#pragma once

#include <array>
#include <span>
#include <vector>

#include "sketchgrasp/sketch_graph.hpp"

namespace sketchgrasp {

/// Normalizes an angle in degrees to (0, 180]; 0 maps to 180.
double normalize_theta(double degrees);

/// Grasp rectangle: center (x, y), width w along the theta direction, height h,
/// theta in degrees relative to the horizontal axis, stored in (0, 180].
struct OrientedRect {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 180.0;

  OrientedRect() = default;
  OrientedRect(double x_, double y_, double w_, double h_, double theta_deg)
      : x(x_), y(y_), w(w_), h(h_), theta(normalize_theta(theta_deg)) {}

  double area() const { return w * h; }
  friend bool operator==(const OrientedRect&, const OrientedRect&) = default;
};

/// Counter-clockwise corners (in a y-up frame) of the rotated rectangle.
std::array<Point2, 4> rect_corners(const OrientedRect& r);

/// Signed shoelace area; positive for counter-clockwise order.
double polygon_area(std::span<const Point2> polygon);

/// Sutherland-Hodgman clip of `subject` against convex counter-clockwise `clip`.
std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip);

/// area(a & b) / area(a | b) via convex clipping; touching rects give 0.
double rotated_jaccard(const OrientedRect& a, const OrientedRect& b);

/// Smallest difference between two undirected orientations, in [0, 90].
double angle_error(double a_deg, double b_deg);

constexpr double kCorrectJaccard = 0.25;
constexpr double kCorrectAngleDeg = 30.0;

/// True iff some ground truth has both Jaccard > 0.25 and angle error < 30 deg
/// with `pred`.
bool is_correct_grasp(const OrientedRect& pred, std::span<const OrientedRect> gts);

/// Greedy suppression in descending score order (stable for equal scores).
/// Returns kept indices in that order.
std::vector<int> rotated_nms(std::span<const OrientedRect> rects, std::span<const float> scores,
                             double threshold);

/// Point-in-polygon by even-odd rule.
bool point_in_polygon(const Point2& p, std::span<const Point2> polygon);

}  // namespace sketchgrasp
