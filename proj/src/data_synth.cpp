#include "sketchgrasp/data_synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sketchgrasp/rng.hpp"

namespace sketchgrasp {

namespace fs = std::filesystem;

namespace {

using Color = std::array<int, 3>;

struct Part {
  std::vector<Point2> polygon;
  Color color;
};

struct LocalGrasp {
  double x, y, w, h, theta;
};

/// A category's geometry in local pixels at 128 px scale, long axis along +x.
struct ObjectShape {
  std::vector<Point2> outline;
  Color color;
  std::vector<Part> parts;
  std::vector<LocalGrasp> grasps;
  std::vector<Polyline> sketch_details;
};

std::vector<Point2> ellipse(double cx, double cy, double rx, double ry, int n) {
  std::vector<Point2> out;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    out.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return out;
}

std::vector<Point2> rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

ObjectShape apple_shape() {
  ObjectShape s;
  const double r = 13.0;
  for (int i = 0; i < 36; ++i) {
    const double a = 2.0 * M_PI * i / 36;
    const double off = std::remainder(a + M_PI / 2, 2.0 * M_PI);
    const double rr = r * (1.0 - 0.12 * std::exp(-(off * off) / (0.35 * 0.35)));
    s.outline.push_back({rr * std::cos(a), rr * std::sin(a)});
  }
  s.color = {200, 30, 35};
  s.parts.push_back({rect(-1.0, -11.0, 1.2, -6.0), {90, 50, 20}});
  for (double t : {0.0, 60.0, 120.0}) s.grasps.push_back({0.0, 1.0, 2 * r + 6, 9.0, t});
  s.sketch_details.push_back({{0.0, -11.0}, {1.0, -14.0}, {2.0, -17.0}});
  return s;
}

ObjectShape banana_shape() {
  ObjectShape s;
  const double radius = 30.0;
  auto center = [&](double t) {
    const double a = 0.9 * t;
    return Point2{radius * std::sin(a), radius * (1.0 - std::cos(a)) - 5.6};
  };
  auto normal = [&](double t) {
    const double a = 0.9 * t;
    return Point2{-std::sin(a), std::cos(a)};
  };
  auto half_width = [](double t) { return 5.5 * (1.0 - 0.6 * t * t); };
  const int n = 24;
  for (int i = 0; i <= n; ++i) {
    const double t = -1.0 + 2.0 * i / n;
    const Point2 c = center(t), nn = normal(t);
    s.outline.push_back({c.x - half_width(t) * nn.x, c.y - half_width(t) * nn.y});
  }
  for (int i = n; i >= 0; --i) {
    const double t = -1.0 + 2.0 * i / n;
    const Point2 c = center(t), nn = normal(t);
    s.outline.push_back({c.x + half_width(t) * nn.x, c.y + half_width(t) * nn.y});
  }
  s.color = {235, 205, 50};
  for (double t : {-1.0, 1.0}) {
    const Point2 c = center(0.93 * t);
    s.parts.push_back({ellipse(c.x, c.y, 2.0, 2.0, 8), {90, 70, 20}});
  }
  for (double t : {-0.35, 0.35}) {
    const Point2 c = center(t);
    const double tangent = 0.9 * t * 180.0 / M_PI;
    s.grasps.push_back({c.x, c.y, 2 * half_width(t) + 10, 9.0, tangent + 90.0});
  }
  return s;
}

ObjectShape hammer_shape() {
  ObjectShape s;
  s.outline = {{-26, -3.5}, {12, -3.5}, {12, -13}, {22, -13},
               {22, 13},    {12, 13},   {12, 3.5}, {-26, 3.5}};
  s.color = {120, 120, 130};
  s.parts.push_back({rect(-26, -3.5, 12, 3.5), {150, 95, 45}});
  s.grasps.push_back({-16.0, 0.0, 17.0, 9.0, 90.0});
  s.grasps.push_back({-4.0, 0.0, 17.0, 9.0, 90.0});
  return s;
}

ObjectShape knife_shape() {
  ObjectShape s;
  s.outline = {{-26, -4}, {-6, -4}, {-6, -3.5}, {18, -3.5}, {26, 2},
               {18, 3.5}, {-6, 3.5}, {-6, 4},    {-26, 4}};
  s.color = {195, 200, 210};
  s.parts.push_back({rect(-26, -4, -6, 4), {30, 30, 30}});
  s.grasps.push_back({-16.0, 0.0, 18.0, 9.0, 90.0});
  s.sketch_details.push_back({{-6, -4}, {-6, 0}, {-6, 4}});
  return s;
}

ObjectShape cup_shape() {
  ObjectShape s;
  s.outline = {{-13, -14}, {13, -14}, {13, -8}};
  for (int i = 1; i < 12; ++i) {
    const double b = -M_PI / 2 + M_PI * i / 12;
    s.outline.push_back({13 + 9 * std::cos(b), 8 * std::sin(b)});
  }
  for (Point2 p : std::initializer_list<Point2>{{13, 8}, {13, 14}, {-13, 14}}) s.outline.push_back(p);
  s.color = {60, 110, 200};
  s.parts.push_back({ellipse(0, 0, 10, 11, 24), {30, 60, 120}});
  s.grasps.push_back({0.0, 0.0, 32.0, 10.0, 180.0});
  s.grasps.push_back({18.0, 0.0, 14.0, 9.0, 180.0});
  Polyline rim = ellipse(0, 0, 10, 11, 24);
  rim.push_back(rim.front());
  s.sketch_details.push_back(rim);
  return s;
}

ObjectShape mouse_shape() {
  ObjectShape s;
  s.outline = ellipse(0, 0, 19, 12, 36);
  s.color = {70, 70, 75};
  s.parts.push_back({rect(6, -0.6, 18.5, 0.6), {20, 20, 20}});
  s.parts.push_back({ellipse(11, 0, 1.8, 1.2, 8), {20, 20, 20}});
  for (double x : {-5.0, 5.0}) {
    const double half = 12.0 * std::sqrt(1.0 - (x / 19.0) * (x / 19.0));
    s.grasps.push_back({x, 0.0, 2 * half + 8, 9.0, 90.0});
  }
  s.sketch_details.push_back({{19, 0}, {12, 0}, {6, 0}});
  s.sketch_details.push_back({{6, -10}, {6, 0}, {6, 10}});
  return s;
}

const ObjectShape& shape_of(const std::string& category) {
  static const std::map<std::string, ObjectShape> shapes{
      {"apple", apple_shape()}, {"banana", banana_shape()}, {"hammer", hammer_shape()},
      {"knife", knife_shape()}, {"cup", cup_shape()},       {"mouse", mouse_shape()}};
  auto it = shapes.find(category);
  if (it == shapes.end()) throw std::invalid_argument("unknown category '" + category + "'");
  return it->second;
}

struct Pose {
  double cx, cy, angle_deg, scale;
  Point2 apply(const Point2& p) const {
    const double a = angle_deg * M_PI / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    return {cx + scale * (p.x * c - p.y * s), cy + scale * (p.x * s + p.y * c)};
  }
  std::vector<Point2> apply(const std::vector<Point2>& ps) const {
    std::vector<Point2> out;
    for (const auto& p : ps) out.push_back(apply(p));
    return out;
  }
};

/// Pixel-center coverage mask.
std::vector<char> rasterize(const std::vector<Point2>& polygon, int size) {
  std::vector<char> mask(std::size_t(size) * size, 0);
  double x0 = size, y0 = size, x1 = 0, y1 = 0;
  for (const auto& p : polygon) {
    x0 = std::min(x0, p.x), y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x), y1 = std::max(y1, p.y);
  }
  const int ix0 = std::max(0, int(std::floor(x0))), iy0 = std::max(0, int(std::floor(y0)));
  const int ix1 = std::min(size - 1, int(std::ceil(x1))), iy1 = std::min(size - 1, int(std::ceil(y1)));
  for (int y = iy0; y <= iy1; ++y) {
    for (int x = ix0; x <= ix1; ++x) {
      if (point_in_polygon({x + 0.5, y + 0.5}, polygon)) mask[std::size_t(y) * size + x] = 1;
    }
  }
  return mask;
}

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void paint(Image& img, const std::vector<char>& mask, const Color& color, double noise, Rng& rng) {
  const int size = img.width;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!mask[std::size_t(y) * size + x]) continue;
      const double n = noise * rng.normal();
      for (int c = 0; c < 3; ++c) img.at(x, y)[c] = clamp_byte(color[c] + n);
    }
  }
}

void darken_border(Image& img, const std::vector<char>& mask) {
  const int size = img.width;
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < size && y < size && mask[std::size_t(y) * size + x];
  };
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!inside(x, y)) continue;
      if (inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1)) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y)[c] = clamp_byte(img.at(x, y)[c] * 0.6);
    }
  }
}

Polyline densify(const Polyline& line, double spacing) {
  Polyline out;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Point2 a = line[i], b = line[i + 1];
    const int steps = std::max(1, int(std::ceil(std::hypot(b.x - a.x, b.y - a.y) / spacing)));
    for (int s = 0; s < steps; ++s) {
      const double t = double(s) / steps;
      out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  }
  out.push_back(line.back());
  return out;
}

std::vector<Polyline> canonical_strokes(const std::string& category) {
  const ObjectShape& s = shape_of(category);
  Polyline outline = s.outline;
  outline.push_back(outline.front());
  std::vector<Polyline> strokes{outline};
  for (const auto& d : s.sketch_details) strokes.push_back(d);
  double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
  for (const auto& st : strokes) {
    for (const auto& p : st) {
      x0 = std::min(x0, p.x), y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x), y1 = std::max(y1, p.y);
    }
  }
  const double scale = 200.0 / std::max(x1 - x0, y1 - y0);
  const double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
  for (auto& st : strokes) {
    st = densify(st, 1.5);
    for (auto& p : st) p = {127.5 + scale * (p.x - mx), 127.5 + scale * (p.y - my)};
  }
  return strokes;
}

}  // namespace

bool is_synth_category(const std::string& category) {
  return std::find(kSynthCategories.begin(), kSynthCategories.end(), category) !=
         kSynthCategories.end();
}

SceneSample synth_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.categories.empty()) throw std::invalid_argument("synth_scene: no categories");
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
    throw std::invalid_argument("synth_scene: bad object count range");
  }
  for (const auto& c : cfg.categories) shape_of(c);
  const int size = cfg.image_size;
  const double unit = size / 128.0;
  Rng rng(seed);

  std::vector<std::string> pool = cfg.categories;
  rng.shuffle(pool);
  const int count = std::min<int>(rng.uniform_int(cfg.min_objects, cfg.max_objects), pool.size());

  Image img(size, size);
  const Color bg{int(rng.uniform(140, 185)), int(rng.uniform(140, 185)), int(rng.uniform(140, 185))};
  paint(img, std::vector<char>(std::size_t(size) * size, 1), bg, 5.0, rng);

  SceneSample scene;
  scene.image = img;
  std::vector<std::vector<char>> masks;
  std::vector<int> areas;
  for (int i = 0; i < count; ++i) {
    const ObjectShape& shape = shape_of(pool[i]);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Pose pose{0, 0, rng.uniform(0.0, 180.0), unit * rng.uniform(0.85, 1.15)};
      double reach = 0.0;
      for (const auto& p : shape.outline) reach = std::max(reach, std::hypot(p.x, p.y));
      reach = reach * pose.scale + 2.0;
      if (2.0 * reach >= size) break;
      pose.cx = rng.uniform(reach, size - reach);
      pose.cy = rng.uniform(reach, size - reach);

      const std::vector<Point2> outline = pose.apply(shape.outline);
      std::vector<char> mask = rasterize(outline, size);
      const int area = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
      bool ok = area > 0;
      for (std::size_t j = 0; ok && j < masks.size(); ++j) {
        int inter = 0;
        for (std::size_t p = 0; p < mask.size(); ++p) inter += mask[p] && masks[j][p];
        ok = inter <= 0.4 * std::min(area, areas[j]);
        for (const auto& g : scene.objects[j].grasps) {
          ok = ok && !point_in_polygon({g.x, g.y}, outline);
        }
      }
      if (!ok) continue;

      SceneObject obj{pool[i], outline, {}};
      for (const auto& g : shape.grasps) {
        const Point2 c = pose.apply(Point2{g.x, g.y});
        obj.grasps.emplace_back(c.x, c.y, g.w * pose.scale, g.h * pose.scale,
                                g.theta + pose.angle_deg);
      }
      obj.grasps = filter_duplicate_grasps(obj.grasps);

      Color color = shape.color;
      for (int& c : color) c += static_cast<int>(rng.uniform(-20.0, 20.0));
      paint(scene.image, mask, color, 4.0, rng);
      for (const auto& part : shape.parts) {
        paint(scene.image, rasterize(pose.apply(part.polygon), size), part.color, 4.0, rng);
      }
      darken_border(scene.image, mask);
      masks.push_back(std::move(mask));
      areas.push_back(area);
      scene.objects.push_back(std::move(obj));
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("synth_scene: could not place '" + pool[i] +
                               "' within 100 attempts (seed " + std::to_string(seed) + ")");
    }
  }
  return scene;
}

RawDrawing canonical_sketch(const std::string& category) {
  return {canonical_strokes(category), category};
}

RawDrawing synth_sketch(const std::string& category, std::uint64_t seed, double amplitude) {
  std::vector<Polyline> strokes = canonical_strokes(category);
  if (amplitude == 0.0) return {strokes, category};
  Rng rng(seed);

  // Smooth displacement field over the cumulative arc length of the drawing.
  double total = 0.0;
  for (const auto& st : strokes) total += polyline_length(st);
  std::array<double, 6> ax{}, ay{}, px{}, py{};
  for (int k = 0; k < 6; ++k) {
    ax[k] = rng.uniform(-1.0, 1.0) / (k + 1);
    ay[k] = rng.uniform(-1.0, 1.0) / (k + 1);
    px[k] = rng.uniform(0.0, 2.0 * M_PI);
    py[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  const double jitter = 6.0 * amplitude;
  const double rot = rng.uniform(-15.0, 15.0) * amplitude * M_PI / 180.0;
  const double sx = 1.0 + rng.uniform(-0.12, 0.12) * amplitude;
  const double sy = 1.0 + rng.uniform(-0.12, 0.12) * amplitude;
  const double tx = rng.uniform(-10.0, 10.0) * amplitude;
  const double ty = rng.uniform(-10.0, 10.0) * amplitude;
  double s = 0.0;
  for (auto& st : strokes) {
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (i > 0) s += std::hypot(st[i].x - st[i - 1].x, st[i].y - st[i - 1].y);
      const double u = 2.0 * M_PI * s / total;
      double dx = 0.0, dy = 0.0;
      for (int k = 0; k < 6; ++k) {
        dx += ax[k] * std::sin((k + 1) * u + px[k]);
        dy += ay[k] * std::sin((k + 1) * u + py[k]);
      }
      const double x = (st[i].x - 127.5) * sx + jitter * dx;
      const double y = (st[i].y - 127.5) * sy + jitter * dy;
      st[i] = {127.5 + tx + x * std::cos(rot) - y * std::sin(rot),
               127.5 + ty + x * std::sin(rot) + y * std::cos(rot)};
    }
  }

  // Split the outline into 1-3 contiguous strokes.
  const Polyline outline = strokes.front();
  const int pieces = rng.uniform_int(1, 3);
  std::vector<Polyline> split;
  if (pieces == 1) {
    split.push_back(outline);
  } else {
    const int n = static_cast<int>(outline.size());
    std::vector<int> cuts{0};
    for (int p = 1; p < pieces; ++p) {
      cuts.push_back(static_cast<int>(n * (p + rng.uniform(-0.3, 0.3)) / pieces));
    }
    cuts.push_back(n - 1);
    for (int p = 0; p < pieces; ++p) {
      split.emplace_back(outline.begin() + cuts[p], outline.begin() + cuts[p + 1] + 1);
    }
  }
  split.insert(split.end(), strokes.begin() + 1, strokes.end());
  for (auto& st : split) {
    for (auto& p : st) p = {std::clamp(p.x, 0.0, 255.0), std::clamp(p.y, 0.0, 255.0)};
  }
  return {split, category};
}

const std::vector<RawDrawing>& SketchBank::get(const std::string& split,
                                               const std::string& category) const {
  auto s = splits.find(split);
  if (s == splits.end()) throw std::invalid_argument("sketch bank has no split '" + split + "'");
  auto c = s->second.find(category);
  if (c == s->second.end() || c->second.empty()) {
    throw std::invalid_argument("sketch bank split '" + split + "' has no sketches for '" +
                                category + "'");
  }
  return c->second;
}

std::vector<std::string> SketchBank::categories() const {
  std::vector<std::string> out;
  for (const auto& [split, by_cat] : splits) {
    for (const auto& [cat, list] : by_cat) {
      if (std::find(out.begin(), out.end(), cat) == out.end()) out.push_back(cat);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

SketchBank make_sketch_bank(const std::vector<std::string>& categories, int train_per_category,
                            int test_per_category, std::uint64_t seed) {
  SketchBank bank;
  for (std::size_t si = 0; si < kSketchSplits.size(); ++si) {
    const std::string& split = kSketchSplits[si];
    const int count = split == "train" ? train_per_category : test_per_category;
    const std::uint64_t split_seed = derive_seed(seed, 0x736b65746368ULL + si);
    for (std::size_t ci = 0; ci < categories.size(); ++ci) {
      auto& list = bank.splits[split][categories[ci]];
      for (int i = 0; i < count; ++i) {
        list.push_back(synth_sketch(categories[ci], derive_seed(split_seed, ci * 1000003ULL + i)));
      }
    }
  }
  return bank;
}

void save_sketch_bank(const fs::path& path, const SketchBank& bank) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& split : kSketchSplits) {
    auto s = bank.splits.find(split);
    if (s == bank.splits.end()) continue;
    for (const auto& [cat, list] : s->second) {
      for (const auto& d : list) {
        RawDrawing tagged = d;
        tagged.category = cat;
        auto j = nlohmann::json::parse(to_ndjson(tagged));
        j["split"] = split;
        out << j.dump() << "\n";
      }
    }
  }
}

SketchBank load_sketch_bank(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  SketchBank bank;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    RawDrawing d;
    try {
      d = parse_ndjson(line);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    const auto j = nlohmann::json::parse(line);
    if (!d.category) throw ParseError(where + ": missing field \"word\"");
    if (!j.contains("split") || !j["split"].is_string()) {
      throw ParseError(where + ": missing field \"split\"");
    }
    bank.splits[j["split"].get<std::string>()][*d.category].push_back(std::move(d));
  }
  return bank;
}

SketchBank few_shot_subset(const SketchBank& bank, int shots, std::uint64_t seed) {
  if (shots < 1) throw std::invalid_argument("few_shot_subset: shots must be positive");
  SketchBank out = bank;
  auto it = out.splits.find("train");
  if (it == out.splits.end()) throw std::invalid_argument("few_shot_subset: no train split");
  for (auto& [cat, list] : it->second) {
    if (shots > static_cast<int>(list.size())) {
      throw std::invalid_argument("few_shot_subset: " + std::to_string(shots) + " shots but only " +
                                  std::to_string(list.size()) + " train sketches for '" + cat + "'");
    }
    std::vector<int> idx(list.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::uint64_t h = 0;
    for (char c : cat) h = h * 131 + static_cast<unsigned char>(c);
    Rng rng(derive_seed(seed, h));
    rng.shuffle(idx);
    idx.resize(shots);
    std::sort(idx.begin(), idx.end());
    std::vector<RawDrawing> picked;
    for (int i : idx) picked.push_back(list[i]);
    list = std::move(picked);
  }
  return out;
}

fs::path write_synth_dataset(const fs::path& dir, const SynthDataConfig& cfg) {
  fs::create_directories(dir / "scenes");
  DatasetManifest m;
  m.root = fs::absolute(dir);
  m.categories = cfg.scene.categories;
  const int total = cfg.train_scenes + cfg.test_scenes;
  for (int i = 0; i < total; ++i) {
    SceneSample s = synth_scene(derive_seed(cfg.seed, 0x7363656e65ULL + i), cfg.scene);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%05d", i);
    s.id = id;
    save_scene(m.root / "scenes", s);
    m.entries.push_back({s.id, m.root / "scenes" / (s.id + ".png"),
                         m.root / "scenes" / (s.id + ".json"),
                         i < cfg.train_scenes ? "train" : "test"});
  }
  m.sketch_bank = m.root / "sketches.ndjson";
  save_sketch_bank(m.sketch_bank,
                   make_sketch_bank(m.categories, cfg.train_sketches, cfg.test_sketches, cfg.seed));
  const fs::path manifest = m.root / "manifest.json";
  save_manifest(manifest, m);
  return manifest;
}

}  // namespace sketchgrasp
