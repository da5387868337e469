#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sketchgrasp/engine.hpp"

namespace sketchgrasp {

struct FewShotConfig {
  std::vector<int> shots{5, 10, 100};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<SketchEncoderKind> encoders{SketchEncoderKind::Graph, SketchEncoderKind::Image};
  TrainConfig train{};
  std::string eval_split = "testA";
};

struct FewShotCell {
  SketchEncoderKind encoder = SketchEncoderKind::Graph;
  int shots = 0;
  std::size_t sketch_encoder_parameters = 0;
  std::vector<double> precision_at_1;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct FewShotResult {
  std::vector<FewShotCell> cells;  // encoder-major, then shots
};

/// Trains one model per (encoder, shots, seed) on `shots` train sketches per
/// category and scores P@1 on held-out scenes with sketches from eval_split.
FewShotResult run_few_shot(const FewShotConfig& cfg, const std::vector<SceneSample>& train_scenes,
                           const std::vector<SceneSample>& test_scenes, const SketchBank& bank,
                           const std::function<void(const std::string&)>& progress = {});

/// One row per encoder, one "mean +/- std" column per shot count.
std::string few_shot_table(const FewShotResult& result);
std::string few_shot_to_json(const FewShotResult& result);

}  // namespace sketchgrasp
