#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sketchgrasp {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Polyline = std::vector<Point2>;

/// Freehand drawing as ordered strokes in source pixel coordinates.
struct RawDrawing {
  std::vector<Polyline> strokes;
  std::optional<std::string> category;
  friend bool operator==(const RawDrawing&, const RawDrawing&) = default;
};

struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Stroke points as a sparse directed graph: consecutive points of a stroke are
/// joined by one edge in each direction; strokes are never joined to each other.
struct SketchGraph {
  std::vector<Point2> vertices;  // normalized to [-1, 1]^2
  std::vector<int> stroke_id;
  std::vector<Edge> edges;
  int dropped_strokes = 0;  // single-point strokes removed during the build
};

/// Malformed NDJSON input; the message names the offending field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kDefaultSketchPoints = 128;
constexpr double kDefaultSimplifyEpsilon = 0.01;

/// Parses one QuickDraw "simplified drawing" line:
/// {"word": str, "drawing": [[[x...],[y...]], ...]}.
RawDrawing parse_ndjson(std::string_view line);

/// Serializes to the same schema (integral coordinates are written as integers).
std::string to_ndjson(const RawDrawing& drawing);

/// Parses a JSON array of [xs, ys] stroke pairs, as sent by the UI.
RawDrawing parse_strokes_json(std::string_view strokes_json);

/// Ramer-Douglas-Peucker: keeps both endpoints; every dropped point lies within
/// `epsilon` of the retained chain.
Polyline simplify_rdp(const Polyline& polyline, double epsilon);

double polyline_length(const Polyline& polyline);

/// Resamples to exactly `n` points in total. Points are allocated to strokes in
/// proportion to arc length (at least two each) and placed at uniform arc-length
/// spacing. Throws std::invalid_argument if n < 2 * stroke count.
RawDrawing resample_to(const RawDrawing& drawing, int n);

/// Maps into [-1, 1]^2 around the bounding-box center, preserving aspect ratio.
/// Zero-extent drawings collapse to the origin.
RawDrawing normalize(const RawDrawing& drawing);

/// simplify -> resample_to(n_s) -> normalize -> bidirectional stroke edges.
/// Single-point strokes are dropped and counted in `dropped_strokes`.
SketchGraph build_graph(const RawDrawing& drawing, int n_s = kDefaultSketchPoints,
                        double epsilon = kDefaultSimplifyEpsilon);

}  // namespace sketchgrasp
