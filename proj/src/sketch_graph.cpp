#include "sketchgrasp/sketch_graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sketchgrasp {

namespace {

using nlohmann::json;

RawDrawing strokes_from_json(const json& drawing, const std::string& field) {
  if (!drawing.is_array()) throw ParseError(field + ": expected an array of strokes");
  if (drawing.empty()) throw ParseError("empty drawing");
  RawDrawing out;
  for (std::size_t s = 0; s < drawing.size(); ++s) {
    const std::string where = field + "[" + std::to_string(s) + "]";
    const json& stroke = drawing[s];
    if (!stroke.is_array() || stroke.size() < 2) {
      throw ParseError(where + ": expected [xs, ys] coordinate arrays");
    }
    const json& xs = stroke[0];
    const json& ys = stroke[1];
    if (!xs.is_array() || !ys.is_array()) {
      throw ParseError(where + ": coordinate lists must be arrays");
    }
    if (xs.size() != ys.size()) {
      throw ParseError(where + ": mismatched xs/ys lengths (" + std::to_string(xs.size()) +
                       " vs " + std::to_string(ys.size()) + ")");
    }
    if (xs.empty()) throw ParseError(where + ": stroke has no points");
    Polyline line;
    line.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].is_number() || !ys[i].is_number()) {
        throw ParseError(where + ": point " + std::to_string(i) + " is not numeric");
      }
      const double x = xs[i].get<double>();
      const double y = ys[i].get<double>();
      if (!std::isfinite(x) || !std::isfinite(y)) {
        throw ParseError(where + ": point " + std::to_string(i) + " is not finite");
      }
      line.push_back({x, y});
    }
    out.strokes.push_back(std::move(line));
  }
  return out;
}

json coordinate(double v) {
  if (v == std::floor(v) && std::abs(v) < 9.0e15) return json(static_cast<std::int64_t>(v));
  return json(v);
}

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

struct Bounds {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();
  double extent() const { return std::max(max_x - min_x, max_y - min_y); }
};

Bounds bounds_of(const RawDrawing& d) {
  Bounds b;
  for (const auto& s : d.strokes) {
    for (const auto& p : s) {
      b.min_x = std::min(b.min_x, p.x);
      b.min_y = std::min(b.min_y, p.y);
      b.max_x = std::max(b.max_x, p.x);
      b.max_y = std::max(b.max_y, p.y);
    }
  }
  return b;
}

Polyline resample_stroke(const Polyline& line, int count) {
  Polyline out;
  out.reserve(count);
  const double total = polyline_length(line);
  if (total <= 0.0 || line.size() < 2) {
    out.assign(count, line.front());
    return out;
  }
  std::size_t seg = 0;
  double seg_start = 0.0;
  for (int k = 0; k < count; ++k) {
    if (k == count - 1) {
      out.push_back(line.back());
      break;
    }
    const double target = total * k / (count - 1);
    while (seg + 1 < line.size() - 1) {
      const double len = std::hypot(line[seg + 1].x - line[seg].x, line[seg + 1].y - line[seg].y);
      if (seg_start + len >= target) break;
      seg_start += len;
      ++seg;
    }
    const Point2& a = line[seg];
    const Point2& b = line[seg + 1];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double t = len > 0.0 ? std::clamp((target - seg_start) / len, 0.0, 1.0) : 0.0;
    out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
  }
  return out;
}

}  // namespace

RawDrawing parse_ndjson(std::string_view line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("malformed JSON: expected an object");
  if (!doc.contains("drawing")) throw ParseError("drawing: missing field");
  RawDrawing out = strokes_from_json(doc["drawing"], "drawing");
  if (doc.contains("word")) {
    if (!doc["word"].is_string()) throw ParseError("word: expected a string");
    out.category = doc["word"].get<std::string>();
  }
  return out;
}

RawDrawing parse_strokes_json(std::string_view strokes_json) {
  json doc;
  try {
    doc = json::parse(strokes_json);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return strokes_from_json(doc, "strokes");
}

std::string to_ndjson(const RawDrawing& drawing) {
  json strokes = json::array();
  for (const auto& s : drawing.strokes) {
    json xs = json::array();
    json ys = json::array();
    for (const auto& p : s) {
      xs.push_back(coordinate(p.x));
      ys.push_back(coordinate(p.y));
    }
    strokes.push_back(json::array({xs, ys}));
  }
  json doc;
  if (drawing.category) doc["word"] = *drawing.category;
  doc["drawing"] = std::move(strokes);
  return doc.dump();
}

double polyline_length(const Polyline& polyline) {
  double total = 0.0;
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    total += std::hypot(polyline[i].x - polyline[i - 1].x, polyline[i].y - polyline[i - 1].y);
  }
  return total;
}

Polyline simplify_rdp(const Polyline& polyline, double epsilon) {
  if (polyline.size() <= 2) return polyline;
  std::vector<char> keep(polyline.size(), 0);
  keep[0] = 1;
  keep[polyline.size() - 1] = 1;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, polyline.size() - 1}};
  while (!stack.empty()) {
    const auto [lo, hi] = stack.back();
    stack.pop_back();
    double worst = -1.0;
    std::size_t worst_idx = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double d = point_segment_distance(polyline[i], polyline[lo], polyline[hi]);
      if (d > worst) {
        worst = d;
        worst_idx = i;
      }
    }
    if (worst > epsilon) {
      keep[worst_idx] = 1;
      if (worst_idx - lo > 1) stack.emplace_back(lo, worst_idx);
      if (hi - worst_idx > 1) stack.emplace_back(worst_idx, hi);
    }
  }
  Polyline out;
  for (std::size_t i = 0; i < polyline.size(); ++i) {
    if (keep[i]) out.push_back(polyline[i]);
  }
  return out;
}

RawDrawing resample_to(const RawDrawing& drawing, int n) {
  const int strokes = static_cast<int>(drawing.strokes.size());
  if (strokes == 0) throw std::invalid_argument("resample_to: drawing has no strokes");
  if (n < 2 * strokes) {
    throw std::invalid_argument("resample_to: " + std::to_string(n) + " points cannot cover " +
                                std::to_string(strokes) + " strokes (need at least " +
                                std::to_string(2 * strokes) + ")");
  }
  std::vector<double> lengths;
  double total = 0.0;
  for (const auto& s : drawing.strokes) {
    lengths.push_back(polyline_length(s));
    total += lengths.back();
  }
  std::vector<double> ideal(strokes);
  for (int i = 0; i < strokes; ++i) {
    ideal[i] = total > 0.0 ? n * lengths[i] / total : double(n) / strokes;
  }
  std::vector<int> alloc(strokes);
  int allocated = 0;
  for (int i = 0; i < strokes; ++i) {
    alloc[i] = std::max(2, static_cast<int>(std::floor(ideal[i])));
    allocated += alloc[i];
  }
  // Largest-remainder correction; ties go to the lower stroke index.
  while (allocated > n) {
    int pick = -1;
    for (int i = 0; i < strokes; ++i) {
      if (alloc[i] > 2 && (pick < 0 || alloc[i] - ideal[i] > alloc[pick] - ideal[pick])) pick = i;
    }
    --alloc[pick];
    --allocated;
  }
  while (allocated < n) {
    int pick = 0;
    for (int i = 1; i < strokes; ++i) {
      if (ideal[i] - alloc[i] > ideal[pick] - alloc[pick]) pick = i;
    }
    ++alloc[pick];
    ++allocated;
  }
  RawDrawing out;
  out.category = drawing.category;
  for (int i = 0; i < strokes; ++i) {
    out.strokes.push_back(resample_stroke(drawing.strokes[i], alloc[i]));
  }
  return out;
}

RawDrawing normalize(const RawDrawing& drawing) {
  RawDrawing out = drawing;
  const Bounds b = bounds_of(drawing);
  const double extent = b.extent();
  const double cx = 0.5 * (b.min_x + b.max_x);
  const double cy = 0.5 * (b.min_y + b.max_y);
  for (auto& s : out.strokes) {
    for (auto& p : s) {
      if (!(extent > 0.0)) {
        p = {0.0, 0.0};
      } else {
        p = {std::clamp((p.x - cx) * 2.0 / extent, -1.0, 1.0),
             std::clamp((p.y - cy) * 2.0 / extent, -1.0, 1.0)};
      }
    }
  }
  return out;
}

SketchGraph build_graph(const RawDrawing& drawing, int n_s, double epsilon) {
  SketchGraph graph;
  RawDrawing cleaned;
  cleaned.category = drawing.category;
  for (const auto& s : drawing.strokes) {
    if (s.size() < 2) {
      ++graph.dropped_strokes;
    } else {
      cleaned.strokes.push_back(s);
    }
  }
  if (cleaned.strokes.empty()) throw std::invalid_argument("empty drawing");

  // Epsilon is given in normalized units; convert with the provisional scale.
  const double extent = bounds_of(cleaned).extent();
  const double source_epsilon = extent > 0.0 ? epsilon * extent / 2.0 : 0.0;
  for (auto& s : cleaned.strokes) s = simplify_rdp(s, source_epsilon);

  const RawDrawing shaped = normalize(resample_to(cleaned, n_s));
  int base = 0;
  for (std::size_t s = 0; s < shaped.strokes.size(); ++s) {
    const auto& stroke = shaped.strokes[s];
    const int count = static_cast<int>(stroke.size());
    for (int i = 0; i < count; ++i) {
      graph.vertices.push_back(stroke[i]);
      graph.stroke_id.push_back(static_cast<int>(s));
      if (i > 0) {
        graph.edges.push_back({base + i - 1, base + i});
        graph.edges.push_back({base + i, base + i - 1});
      }
    }
    base += count;
  }
  return graph;
}

}  // namespace sketchgrasp
