#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sketchgrasp/dataset.hpp"
#include "sketchgrasp/sketch_graph.hpp"

namespace sketchgrasp {

inline const std::vector<std::string> kSynthCategories{"apple", "banana", "hammer",
                                                       "knife", "cup",    "mouse"};

bool is_synth_category(const std::string& category);

struct SceneConfig {
  int image_size = 128;
  std::vector<std::string> categories = kSynthCategories;
  int min_objects = 2;
  int max_objects = 4;
};

/// Deterministic cluttered scene: each object has a distinct category, a random
/// pose, at most 40% overlap with any other object, and its grasp centers are
/// never covered by objects drawn later. Throws std::runtime_error when an
/// object cannot be placed within 100 attempts.
SceneSample synth_scene(std::uint64_t seed, const SceneConfig& cfg = {});

/// The category's outline (plus detail strokes) on a 256 x 256 canvas.
RawDrawing canonical_sketch(const std::string& category);

/// A perturbed canonical sketch: smooth jitter, rotation up to 15 degrees,
/// anisotropic scale and translation, all proportional to `amplitude`, and the
/// outline split into 1-3 strokes. amplitude 0 returns canonical_sketch.
RawDrawing synth_sketch(const std::string& category, std::uint64_t seed, double amplitude = 1.0);

inline const std::vector<std::string> kSketchSplits{"train", "testA", "testB"};

struct SketchBank {
  std::map<std::string, std::map<std::string, std::vector<RawDrawing>>> splits;  // split -> category

  /// Throws std::invalid_argument for an unknown split or empty category.
  const std::vector<RawDrawing>& get(const std::string& split, const std::string& category) const;
  std::vector<std::string> categories() const;
};

/// Sketches for each split drawn from disjoint seed streams.
SketchBank make_sketch_bank(const std::vector<std::string>& categories, int train_per_category,
                            int test_per_category, std::uint64_t seed);

/// One NDJSON line per sketch, with "word", "split" and "drawing" fields.
void save_sketch_bank(const std::filesystem::path& path, const SketchBank& bank);
SketchBank load_sketch_bank(const std::filesystem::path& path);

/// `shots` uniformly sampled train sketches per category (original order kept);
/// test splits are copied unchanged.
SketchBank few_shot_subset(const SketchBank& bank, int shots, std::uint64_t seed);

struct SynthDataConfig {
  std::uint64_t seed = 1;
  SceneConfig scene{};
  int train_scenes = 400;
  int test_scenes = 100;
  int train_sketches = 200;  // per category
  int test_sketches = 50;    // per category and test split
};

/// Writes scenes, annotations, sketches.ndjson and manifest.json under `dir`.
/// Returns the manifest path.
std::filesystem::path write_synth_dataset(const std::filesystem::path& dir,
                                          const SynthDataConfig& cfg);

}  // namespace sketchgrasp
