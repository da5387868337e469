#include "sketchgrasp/few_shot.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace sketchgrasp {

FewShotResult run_few_shot(const FewShotConfig& cfg, const std::vector<SceneSample>& train_scenes,
                           const std::vector<SceneSample>& test_scenes, const SketchBank& bank,
                           const std::function<void(const std::string&)>& progress) {
  FewShotResult result;
  EvalConfig eval;
  eval.ks = {1};
  eval.sketch_splits = {cfg.eval_split};
  for (SketchEncoderKind kind : cfg.encoders) {
    for (int shots : cfg.shots) {
      FewShotCell cell;
      cell.encoder = kind;
      cell.shots = shots;
      for (std::uint64_t seed : cfg.seeds) {
        TrainConfig tc = cfg.train;
        tc.model.sketch_encoder = kind;
        tc.seed = seed;
        const SketchBank subset = few_shot_subset(bank, shots, seed);
        const TrainResult trained = train(tc, train_scenes, subset);
        cell.sketch_encoder_parameters = trained.model.sketch_encoder_parameter_count();
        eval.seed = seed;
        const double p1 = evaluate(trained.model, test_scenes, subset, eval).front().overall.precision.at(1);
        cell.precision_at_1.push_back(p1);
        if (progress) {
          progress(to_string(kind) + " shots=" + std::to_string(shots) + " seed=" +
                   std::to_string(seed) + " P@1=" + std::to_string(p1));
        }
      }
      const double n = static_cast<double>(cell.precision_at_1.size());
      cell.mean = std::accumulate(cell.precision_at_1.begin(), cell.precision_at_1.end(), 0.0) / n;
      double var = 0.0;
      for (double v : cell.precision_at_1) var += (v - cell.mean) * (v - cell.mean);
      cell.stddev = std::sqrt(var / n);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

std::string few_shot_table(const FewShotResult& result) {
  std::vector<int> shots;
  std::vector<SketchEncoderKind> encoders;
  for (const auto& c : result.cells) {
    if (std::find(shots.begin(), shots.end(), c.shots) == shots.end()) shots.push_back(c.shots);
    if (std::find(encoders.begin(), encoders.end(), c.encoder) == encoders.end()) {
      encoders.push_back(c.encoder);
    }
  }
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-8s %10s", "encoder", "params");
  out << buf;
  for (int s : shots) {
    std::snprintf(buf, sizeof(buf), " %16s", (std::to_string(s) + "-shot P@1").c_str());
    out << buf;
  }
  out << "\n";
  for (SketchEncoderKind e : encoders) {
    std::size_t params = 0;
    for (const auto& c : result.cells) {
      if (c.encoder == e) params = c.sketch_encoder_parameters;
    }
    std::snprintf(buf, sizeof(buf), "%-8s %10zu", to_string(e).c_str(), params);
    out << buf;
    for (int s : shots) {
      std::string cell = "-";
      for (const auto& c : result.cells) {
        if (c.encoder == e && c.shots == s) {
          std::snprintf(buf, sizeof(buf), "%.3f +/- %.3f", c.mean, c.stddev);
          cell = buf;
        }
      }
      std::snprintf(buf, sizeof(buf), " %16s", cell.c_str());
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string few_shot_to_json(const FewShotResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"encoder", to_string(c.encoder)},
                     {"shots", c.shots},
                     {"sketch_encoder_parameters", c.sketch_encoder_parameters},
                     {"precision_at_1", c.precision_at_1},
                     {"mean", c.mean},
                     {"stddev", c.stddev}});
  }
  return nlohmann::json{{"cells", cells}}.dump(2);
}

}  // namespace sketchgrasp
