#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sketchgrasp/geometry.hpp"
#include "sketchgrasp/image.hpp"

namespace sketchgrasp {

struct SceneObject {
  std::string category;
  std::vector<Point2> outline;  // image pixels; may be empty for ingested data
  std::vector<OrientedRect> grasps;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneSample {
  std::string id;
  Image image;
  std::vector<SceneObject> objects;
  friend bool operator==(const SceneSample&, const SceneSample&) = default;

  bool has_category(const std::string& category) const;
  std::vector<std::string> categories() const;  // distinct, in object order
};

/// Overlap above which annotated grasps are treated as duplicates on ingest.
constexpr double kLabelFilterIou = 0.7;

/// Rotated NMS over equally scored grasps: earlier entries win.
std::vector<OrientedRect> filter_duplicate_grasps(const std::vector<OrientedRect>& grasps,
                                                  double threshold = kLabelFilterIou);

/// Mirror about the vertical center line; theta becomes 180 - theta.
SceneSample flip_scene(const SceneSample& scene);

std::string annotations_to_json(const SceneSample& scene);
/// Parses {"objects":[{"category":..,"grasps":[[x,y,w,h,theta],..],"outline":[[x,y],..]}]}.
/// `where` prefixes error messages.
std::vector<SceneObject> annotations_from_json(const std::string& text, const std::string& where);

/// Writes <dir>/<id>.png and <dir>/<id>.json.
void save_scene(const std::filesystem::path& dir, const SceneSample& scene);
SceneSample load_scene(const std::filesystem::path& dir, const std::string& id);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;        // absolute
  std::filesystem::path annotations;  // absolute
  std::string split;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> categories;
  std::filesystem::path sketch_bank;  // absolute, may be empty
  std::vector<ManifestEntry> entries;
};

/// Paths inside the manifest are relative to its directory.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Read-only view over a manifest; samples are decoded on demand.
class Dataset {
 public:
  /// Validates the schema, split disjointness and file existence.
  static Dataset open(const std::filesystem::path& manifest_path);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<std::string>& categories() const { return manifest_.categories; }
  std::size_t size() const { return manifest_.entries.size(); }
  /// Entry indices with the given split tag, in manifest order.
  std::vector<std::size_t> split(const std::string& tag) const;
  /// Decodes one sample; grasps pass through duplicate filtering.
  SceneSample load(std::size_t index) const;

 private:
  DatasetManifest manifest_;
};

}  // namespace sketchgrasp
