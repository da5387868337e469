#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sketchgrasp/data_synth.hpp"
#include "sketchgrasp/dataset.hpp"
#include "sketchgrasp/metrics.hpp"
#include "sketchgrasp/model.hpp"

namespace sketchgrasp {

inline constexpr const char* kVersion = "0.1.0";

struct TrainConfig {
  double learning_rate = 0.005;
  double lr_decay = 0.75;
  int decay_interval = 2600;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 8;
  int iterations = 5000;
  /// Probability that a step's query names an object present in the scene.
  double positive_query_ratio = 0.9;
  bool augment = true;  // horizontal flip and brightness jitter
  std::uint64_t seed = 1;
  ModelConfig model{};

  /// Throws std::invalid_argument on non-positive rates or decay outside (0, 1).
  void validate() const;
};

/// Full-scale schedule: 50K iterations at 1024-d features.
TrainConfig paper_train_config();

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// lr0 * decay^floor(iteration / interval).
double lr_at(int iteration, const TrainConfig& cfg);

struct MetricRecord {
  int iter = 0;
  double loss = 0.0;
  double loss_gp = 0.0;
  double loss_gd = 0.0;
  double lr = 0.0;
};

std::string metric_to_json(const MetricRecord& m);

struct TrainHooks {
  /// Called after every optimizer step.
  std::function<void(const MetricRecord&, const Model&)> on_step;
};

struct TrainResult {
  Model model;
  int iterations = 0;
  std::vector<MetricRecord> log;
};

/// Letterboxes a scene to size x size, scaling its annotations.
SceneSample fit_scene(const SceneSample& scene, int size);

/// Joint training over in-memory scenes. Each step draws batch_size scenes, a
/// query category per scene (present with probability positive_query_ratio)
/// and a random train-split sketch of that category, then applies one SGD step
/// on the batch-mean loss. Throws NonFiniteError naming the step seed if the
/// loss is not finite.
TrainResult train(const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                  const SketchBank& bank, const TrainHooks& hooks = {});

/// Same as `train`, starting from the given parameters.
TrainResult train_from(Model init, const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                       const SketchBank& bank, const TrainHooks& hooks = {});

struct EvalConfig {
  std::vector<int> ks = kDefaultKs;
  std::vector<std::string> sketch_splits{"testA", "testB"};
  std::uint64_t seed = 1;
};

/// Ranked grasps for one scene and query; `category` is only for oracles.
using GraspPredictor = std::function<std::vector<OrientedRect>(
    std::size_t scene_index, const SceneSample& scene, const SketchGraph& query,
    const std::string& category, int k)>;

/// One query per (scene, present category), with a sketch drawn from each
/// requested split; returns one report per split.
std::vector<EvalReport> evaluate_predictor(const GraspPredictor& predictor,
                                           const std::vector<SceneSample>& scenes,
                                           const SketchBank& bank, const EvalConfig& cfg,
                                           int sketch_points = kDefaultSketchPoints);

std::vector<EvalReport> evaluate(const Model& model, const std::vector<SceneSample>& scenes,
                                 const SketchBank& bank, const EvalConfig& cfg = {});

/// Letterboxes `image` to the model input, runs the full pipeline and maps the
/// grasps back to source pixels. Only grasps scoring at least `min_score` are
/// returned (negative: use the model's score_threshold).
std::vector<GraspPrediction> infer(const Model& model, const Image& image,
                                   const RawDrawing& strokes, int k, double min_score = -1.0);

/// Loads every scene of one manifest split, fitted to the model input size.
std::vector<SceneSample> load_split(const Dataset& dataset, const std::string& split,
                                    int image_size);

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  int redrawn = 0;  // probes abandoned because the step straddled a kink
};

/// Central finite differences of the joint loss (with sampling frozen) against
/// backprop for `count` random parameter entries spread over all modules, on a
/// small synthetic problem. rel = |a - n| / max(|a|, |n|, floor). The loss is
/// re-evaluated with double-precision loss formulas on the float32 network.
GradCheckReport end_to_end_gradcheck(std::uint64_t seed, int count = 10, double step = 1e-3,
                                     double floor = 1e-2);

}  // namespace sketchgrasp
