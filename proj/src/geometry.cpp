#include "sketchgrasp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sketchgrasp {

double normalize_theta(double degrees) {
  double t = std::fmod(degrees, 180.0);
  if (t <= 0.0) t += 180.0;
  return t;
}

std::array<Point2, 4> rect_corners(const OrientedRect& r) {
  const double rad = r.theta * M_PI / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double hw = 0.5 * r.w;
  const double hh = 0.5 * r.h;
  // Local offsets in counter-clockwise order, then rotated about the center.
  const std::array<Point2, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {r.x + local[i].x * c - local[i].y * s, r.y + local[i].x * s + local[i].y * c};
  }
  return out;
}

double polygon_area(std::span<const Point2> polygon) {
  double acc = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip) {
  std::vector<Point2> output(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % m];
    auto side = [&](const Point2& p) {
      return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    };
    std::vector<Point2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + input.size() - 1) % input.size()];
      const double sc = side(cur);
      const double sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) {
          const double t = sp / (sp - sc);
          output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        output.push_back(cur);
      } else if (sp >= 0.0) {
        const double t = sp / (sp - sc);
        output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
    }
  }
  return output;
}

double rotated_jaccard(const OrientedRect& a, const OrientedRect& b) {
  const auto pa = rect_corners(a);
  const auto pb = rect_corners(b);
  const auto inter_poly = clip_convex(pa, pb);
  double inter = inter_poly.size() >= 3 ? std::abs(polygon_area(inter_poly)) : 0.0;
  // Edge contact leaves a rounding-level sliver; count it as no overlap.
  if (inter <= 1e-12 * std::min(a.area(), b.area())) inter = 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double angle_error(double a_deg, double b_deg) {
  const double d = std::fmod(std::abs(a_deg - b_deg), 180.0);
  return std::min(d, 180.0 - d);
}

bool is_correct_grasp(const OrientedRect& pred, std::span<const OrientedRect> gts) {
  return std::any_of(gts.begin(), gts.end(), [&](const OrientedRect& gt) {
    return angle_error(pred.theta, gt.theta) < kCorrectAngleDeg &&
           rotated_jaccard(pred, gt) > kCorrectJaccard;
  });
}

std::vector<int> rotated_nms(std::span<const OrientedRect> rects, std::span<const float> scores,
                             double threshold) {
  if (rects.size() != scores.size()) {
    throw std::invalid_argument("rotated_nms: rect and score counts differ");
  }
  std::vector<int> order(rects.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return scores[i] > scores[j]; });
  std::vector<int> kept;
  for (int idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](int k) {
      return rotated_jaccard(rects[idx], rects[k]) > threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

bool point_in_polygon(const Point2& p, std::span<const Point2> polygon) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

}  // namespace sketchgrasp
