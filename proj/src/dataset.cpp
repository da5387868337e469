#include "sketchgrasp/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sketchgrasp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << text;
}

const json& field(const json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name)) {
    throw DatasetError(where + ": missing field \"" + name + "\"");
  }
  return j.at(name);
}

}  // namespace

bool SceneSample::has_category(const std::string& category) const {
  return std::any_of(objects.begin(), objects.end(),
                     [&](const SceneObject& o) { return o.category == category; });
}

std::vector<std::string> SceneSample::categories() const {
  std::vector<std::string> out;
  for (const auto& o : objects) {
    if (std::find(out.begin(), out.end(), o.category) == out.end()) out.push_back(o.category);
  }
  return out;
}

std::vector<OrientedRect> filter_duplicate_grasps(const std::vector<OrientedRect>& grasps,
                                                  double threshold) {
  const std::vector<float> scores(grasps.size(), 1.0f);
  std::vector<int> keep = rotated_nms(grasps, scores, threshold);
  std::sort(keep.begin(), keep.end());
  std::vector<OrientedRect> out;
  for (int i : keep) out.push_back(grasps[i]);
  return out;
}

SceneSample flip_scene(const SceneSample& scene) {
  SceneSample out{scene.id, flip_horizontal(scene.image), {}};
  const double w = scene.image.width;
  for (const auto& o : scene.objects) {
    SceneObject f{o.category, {}, {}};
    for (auto p : o.outline) f.outline.push_back({w - p.x, p.y});
    for (const auto& g : o.grasps) f.grasps.emplace_back(w - g.x, g.y, g.w, g.h, 180.0 - g.theta);
    out.objects.push_back(std::move(f));
  }
  return out;
}

std::string annotations_to_json(const SceneSample& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    json grasps = json::array();
    for (const auto& g : o.grasps) grasps.push_back({g.x, g.y, g.w, g.h, g.theta});
    json outline = json::array();
    for (const auto& p : o.outline) outline.push_back({p.x, p.y});
    objects.push_back({{"category", o.category}, {"grasps", grasps}, {"outline", outline}});
  }
  return json{{"id", scene.id}, {"objects", objects}}.dump() + "\n";
}

std::vector<SceneObject> annotations_from_json(const std::string& text, const std::string& where) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DatasetError(where + ": malformed JSON: " + e.what());
  }
  const json& objects = field(j, "objects", where);
  if (!objects.is_array()) throw DatasetError(where + ": \"objects\" must be an array");
  std::vector<SceneObject> out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string at = where + ": objects[" + std::to_string(i) + "]";
    const json& o = objects[i];
    SceneObject obj;
    const json& cat = field(o, "category", at);
    if (!cat.is_string()) throw DatasetError(at + ": \"category\" must be a string");
    obj.category = cat.get<std::string>();
    const json& grasps = field(o, "grasps", at);
    if (!grasps.is_array()) throw DatasetError(at + ": \"grasps\" must be an array");
    for (std::size_t k = 0; k < grasps.size(); ++k) {
      const json& g = grasps[k];
      if (!g.is_array() || g.size() != 5 ||
          !std::all_of(g.begin(), g.end(), [](const json& v) { return v.is_number(); })) {
        throw DatasetError(at + ": grasps[" + std::to_string(k) + "] must be [x,y,w,h,theta]");
      }
      const double w = g[2].get<double>(), h = g[3].get<double>();
      if (!(w > 0.0) || !(h > 0.0)) {
        throw DatasetError(at + ": grasps[" + std::to_string(k) + "] has non-positive size");
      }
      obj.grasps.emplace_back(g[0].get<double>(), g[1].get<double>(), w, h, g[4].get<double>());
    }
    if (o.contains("outline")) {
      for (const json& p : o.at("outline")) {
        if (!p.is_array() || p.size() != 2) throw DatasetError(at + ": outline points must be [x,y]");
        obj.outline.push_back({p[0].get<double>(), p[1].get<double>()});
      }
    }
    out.push_back(std::move(obj));
  }
  return out;
}

void save_scene(const fs::path& dir, const SceneSample& scene) {
  fs::create_directories(dir);
  write_png((dir / (scene.id + ".png")).string(), scene.image);
  write_text(dir / (scene.id + ".json"), annotations_to_json(scene));
}

SceneSample load_scene(const fs::path& dir, const std::string& id) {
  const fs::path ann = dir / (id + ".json");
  return {id, read_png((dir / (id + ".png")).string()),
          annotations_from_json(read_text(ann), ann.string())};
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto rel = [&](const fs::path& p) { return fs::relative(p, base).generic_string(); };
  json samples = json::array();
  for (const auto& e : m.entries) {
    samples.push_back({{"id", e.id},
                       {"image", rel(e.image)},
                       {"annotations", rel(e.annotations)},
                       {"split", e.split}});
  }
  json j{{"version", 1}, {"categories", m.categories}, {"samples", samples}};
  if (!m.sketch_bank.empty()) j["sketch_bank"] = rel(m.sketch_bank);
  write_text(path, j.dump(1) + "\n");
}

Dataset Dataset::open(const fs::path& manifest_path) {
  const std::string where = manifest_path.string();
  json j;
  try {
    j = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw DatasetError(where + ": malformed JSON: " + e.what());
  }
  Dataset ds;
  DatasetManifest& m = ds.manifest_;
  m.root = fs::absolute(manifest_path).parent_path();
  const json& cats = field(j, "categories", where);
  if (!cats.is_array()) throw DatasetError(where + ": \"categories\" must be an array");
  for (const auto& c : cats) m.categories.push_back(c.get<std::string>());
  if (j.contains("sketch_bank")) {
    m.sketch_bank = m.root / j.at("sketch_bank").get<std::string>();
    if (!fs::exists(m.sketch_bank)) {
      throw DatasetError(where + ": sketch_bank file not found: " + m.sketch_bank.string());
    }
  }
  const json& samples = field(j, "samples", where);
  if (!samples.is_array() || samples.empty()) throw DatasetError(where + ": no samples");
  std::map<std::string, std::string> split_of;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string at = where + ": samples[" + std::to_string(i) + "]";
    const json& s = samples[i];
    ManifestEntry e;
    e.id = field(s, "id", at).get<std::string>();
    e.image = m.root / field(s, "image", at).get<std::string>();
    e.annotations = m.root / field(s, "annotations", at).get<std::string>();
    e.split = field(s, "split", at).get<std::string>();
    for (const fs::path& p : {e.image, e.annotations}) {
      if (!fs::exists(p)) throw DatasetError(at + ": file not found: " + p.string());
    }
    auto [it, fresh] = split_of.emplace(e.id, e.split);
    if (!fresh) {
      throw DatasetError(at + ": id \"" + e.id + "\" already listed (split " + it->second + ")");
    }
    m.entries.push_back(std::move(e));
  }
  return ds;
}

std::vector<std::size_t> Dataset::split(const std::string& tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
    if (manifest_.entries[i].split == tag) out.push_back(i);
  }
  return out;
}

SceneSample Dataset::load(std::size_t index) const {
  const ManifestEntry& e = manifest_.entries.at(index);
  SceneSample s{e.id, read_png(e.image.string()),
                annotations_from_json(read_text(e.annotations), e.annotations.string())};
  for (auto& o : s.objects) o.grasps = filter_duplicate_grasps(o.grasps);
  return s;
}

}  // namespace sketchgrasp
