// Command-line front end: data synthesis, training, evaluation, few-shot
// experiments, single-image inference, the HTTP service and gradient checks.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sketchgrasp/checkpoint.hpp"
#include "sketchgrasp/engine.hpp"
#include "sketchgrasp/few_shot.hpp"
#include "sketchgrasp/service.hpp"

namespace sg = sketchgrasp;

namespace {

struct TrainFlags {
  sg::TrainConfig cfg;
  std::string encoder = "graph";
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  sg::TrainConfig& c = f.cfg;
  cmd->add_option("--iterations", c.iterations, "Optimizer steps")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "Scenes per step")->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Initial learning rate")->capture_default_str();
  cmd->add_option("--lr-decay", c.lr_decay, "Step decay factor")->capture_default_str();
  cmd->add_option("--decay-interval", c.decay_interval, "Iterations per decay step")
      ->capture_default_str();
  cmd->add_option("--momentum", c.momentum)->capture_default_str();
  cmd->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  cmd->add_option("--positive-ratio", c.positive_query_ratio,
                  "Probability that the query object is present")
      ->capture_default_str();
  cmd->add_flag("!--no-augment", c.augment, "Disable flip and brightness augmentation");
  cmd->add_option("--image-size", c.model.image_size)->capture_default_str();
  cmd->add_option("--feature-dim", c.model.feature_dim, "Shared feature width D")
      ->capture_default_str();
  cmd->add_option("--sketch-points", c.model.sketch_points, "Vertices per sketch graph")
      ->capture_default_str();
  cmd->add_option("--context-convs", c.model.image_context_convs,
                  "Residual 3x3 convs after the image encoder's last downsampling")
      ->capture_default_str();
  cmd->add_option("--encoder", f.encoder, "Sketch encoder")
      ->check(CLI::IsMember({"graph", "image"}))
      ->capture_default_str();
  cmd->add_flag("--dynamic-knn", c.model.dynamic_knn, "Recompute k-NN edges in every block");
  cmd->add_option("--roi-batch", c.model.roi_assign.batch_size, "Sampled ROIs per image")
      ->capture_default_str();
}

sg::TrainConfig finish(TrainFlags& f, std::uint64_t seed) {
  f.cfg.seed = seed;
  f.cfg.model.sketch_encoder = sg::sketch_encoder_from_string(f.encoder);
  f.cfg.validate();
  return f.cfg;
}

sg::SketchBank bank_of(const sg::Dataset& ds) {
  if (ds.manifest().sketch_bank.empty()) {
    throw std::runtime_error("manifest has no sketch_bank entry");
  }
  return sg::load_sketch_bank(ds.manifest().sketch_bank);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

/// Accepts a QuickDraw NDJSON line or a bare [[xs, ys], ...] array.
sg::RawDrawing read_strokes(const std::string& path) {
  std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') return sg::parse_strokes_json(text);
  const auto eol = text.find('\n', first);
  return sg::parse_ndjson(text.substr(first, eol == std::string::npos ? eol : eol - first));
}

nlohmann::json grasps_json(const std::vector<sg::GraspPrediction>& grasps) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : grasps) {
    out.push_back({{"x", g.rect.x}, {"y", g.rect.y}, {"w", g.rect.w}, {"h", g.rect.h},
                   {"theta", g.rect.theta}, {"label", g.label}, {"score", g.score}});
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-conditioned grasp detection"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "Master seed")->capture_default_str();

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic scene and sketch dataset");
  sg::SynthDataConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--train-scenes", synth_cfg.train_scenes)->capture_default_str();
  synth->add_option("--test-scenes", synth_cfg.test_scenes)->capture_default_str();
  synth->add_option("--train-sketches", synth_cfg.train_sketches, "Per category")
      ->capture_default_str();
  synth->add_option("--test-sketches", synth_cfg.test_sketches, "Per category and test split")
      ->capture_default_str();
  synth->add_option("--image-size", synth_cfg.scene.image_size)->capture_default_str();
  synth->add_option("--min-objects", synth_cfg.scene.min_objects)->capture_default_str();
  synth->add_option("--max-objects", synth_cfg.scene.max_objects)->capture_default_str();
  synth->add_option("--seed", seed, "Master seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train the joint model");
  TrainFlags train_flags;
  std::string train_data, train_out, metrics_path;
  int checkpoint_every = 0;
  train->add_option("--data", train_data, "Dataset manifest")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--metrics", metrics_path, "NDJSON metrics log");
  train->add_option("--checkpoint-every", checkpoint_every, "Also save every N iterations");
  train->add_option("--seed", seed, "Master seed")->capture_default_str();
  add_train_flags(train, train_flags);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (P@k / R@k)");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_json;
  sg::EvalConfig eval_cfg;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data, "Dataset manifest")->required();
  eval->add_option("--split", eval_split, "Scene split")->capture_default_str();
  eval->add_option("--sketch-splits", eval_cfg.sketch_splits)->delimiter(',')->capture_default_str();
  eval->add_option("--ks", eval_cfg.ks)->delimiter(',')->capture_default_str();
  eval->add_option("--json", eval_json, "Write reports as JSON");
  eval->add_option("--seed", seed, "Master seed")->capture_default_str();

  // few-shot
  auto* few = app.add_subcommand("few-shot", "Graph vs image sketch encoders under K-shot training");
  sg::FewShotConfig few_cfg;
  TrainFlags few_flags;
  std::string few_data, few_json, few_scene_split = "test";
  few->add_option("--data", few_data, "Dataset manifest")->required();
  few->add_option("--shots", few_cfg.shots)->delimiter(',')->capture_default_str();
  few->add_option("--seeds", few_cfg.seeds)->delimiter(',')->capture_default_str();
  few->add_option("--eval-split", few_cfg.eval_split, "Sketch split")->capture_default_str();
  few->add_option("--scene-split", few_scene_split)->capture_default_str();
  few->add_option("--json", few_json, "Write cells as JSON");
  add_train_flags(few, few_flags);

  // infer
  auto* inf = app.add_subcommand("infer", "Top-k grasps for one image and sketch");
  std::string inf_ckpt, inf_image, inf_strokes;
  int inf_k = 5;
  double inf_min_score = -1.0;
  inf->add_option("--checkpoint", inf_ckpt)->required();
  inf->add_option("--image", inf_image, "PNG image")->required();
  inf->add_option("--strokes", inf_strokes, "NDJSON line or [[xs,ys],...] file")->required();
  inf->add_option("-k,--k", inf_k)->capture_default_str();
  inf->add_option("--min-score", inf_min_score, "Default: the model's score threshold");
  inf->add_option("--seed", seed, "Master seed")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP inference service");
  std::string serve_ckpt, serve_data, serve_split = "test", serve_host = "127.0.0.1", static_dir;
  int serve_port = 8080;
  serve->add_option("--checkpoint", serve_ckpt)->required();
  serve->add_option("--data", serve_data, "Manifest providing /scenes");
  serve->add_option("--split", serve_split)->capture_default_str();
  serve->add_option("--host", serve_host)->capture_default_str();
  serve->add_option("--port", serve_port)->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Serve files (e.g. the UI) under /");
  serve->add_option("--seed", seed, "Master seed")->capture_default_str();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the joint loss");
  int grad_count = 10;
  double grad_tol = 1e-2, grad_step = 1e-3, grad_floor = 1e-2;
  grad->add_option("--params", grad_count, "Parameter entries to probe")->capture_default_str();
  grad->add_option("--tolerance", grad_tol)->capture_default_str();
  grad->add_option("--step", grad_step, "Central-difference step")->capture_default_str();
  grad->add_option("--floor", grad_floor, "Lower bound of the relative-error denominator")
      ->capture_default_str();
  grad->add_option("--seed", seed, "Master seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      synth_cfg.seed = seed;
      const auto manifest = sg::write_synth_dataset(synth_out, synth_cfg);
      std::cout << "wrote " << manifest.string() << "\n";
    } else if (*train) {
      const sg::TrainConfig cfg = finish(train_flags, seed);
      const sg::Dataset ds = sg::Dataset::open(train_data);
      const auto scenes = sg::load_split(ds, "train", cfg.model.image_size);
      const auto bank = bank_of(ds);
      std::ofstream metrics;
      if (!metrics_path.empty()) {
        metrics.open(metrics_path);
        if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
      }
      const std::string cfg_json = sg::train_config_to_json(cfg);
      sg::TrainHooks hooks;
      hooks.on_step = [&](const sg::MetricRecord& m, const sg::Model& model) {
        if (metrics.is_open()) metrics << sg::metric_to_json(m) << "\n" << std::flush;
        if (m.iter % 100 == 0 || m.iter == 1) {
          std::cerr << "iter " << m.iter << " loss " << m.loss << " (gp " << m.loss_gp << ", gd "
                    << m.loss_gd << ") lr " << m.lr << "\n";
        }
        if (checkpoint_every > 0 && m.iter % checkpoint_every == 0) {
          sg::save_checkpoint(train_out + "." + std::to_string(m.iter), model, m.iter, cfg_json);
        }
      };
      const auto result = sg::train(cfg, scenes, bank, hooks);
      const std::string digest =
          sg::save_checkpoint(train_out, result.model, result.iterations, cfg_json);
      std::cout << "checkpoint " << train_out << " sha256 " << digest << "\n";
    } else if (*eval) {
      const auto ck = sg::load_checkpoint(eval_ckpt);
      const sg::Dataset ds = sg::Dataset::open(eval_data);
      eval_cfg.seed = seed;
      const auto reports = sg::evaluate(ck.model, sg::load_split(ds, eval_split, ck.model.config.image_size),
                                        bank_of(ds), eval_cfg);
      std::cout << sg::reports_to_table(reports);
      if (!eval_json.empty()) {
        nlohmann::json all = nlohmann::json::array();
        for (const auto& r : reports) all.push_back(nlohmann::json::parse(sg::report_to_json(r)));
        write_file(eval_json, all.dump(2) + "\n");
      }
    } else if (*few) {
      few_cfg.train = finish(few_flags, seed);
      const sg::Dataset ds = sg::Dataset::open(few_data);
      const int size = few_cfg.train.model.image_size;
      const auto result = sg::run_few_shot(
          few_cfg, sg::load_split(ds, "train", size), sg::load_split(ds, few_scene_split, size),
          bank_of(ds), [](const std::string& line) { std::cerr << line << "\n"; });
      std::cout << sg::few_shot_table(result);
      if (!few_json.empty()) write_file(few_json, sg::few_shot_to_json(result) + "\n");
    } else if (*inf) {
      const auto ck = sg::load_checkpoint(inf_ckpt);
      const auto grasps =
          sg::infer(ck.model, sg::read_png(inf_image), read_strokes(inf_strokes), inf_k, inf_min_score);
      std::cout << nlohmann::json{{"grasps", grasps_json(grasps)}}.dump(2) << "\n";
    } else if (*serve) {
      // Block termination signals before any thread starts; the main thread waits for them.
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      auto ck = sg::load_checkpoint(serve_ckpt);
      auto snapshot = std::make_shared<sg::ModelSnapshot>(
          sg::ModelSnapshot{std::move(ck.model), ck.digest, ck.iteration});
      std::vector<sg::SceneSample> scenes;
      if (!serve_data.empty()) {
        scenes = sg::load_split(sg::Dataset::open(serve_data), serve_split,
                                snapshot->model.config.image_size);
      }
      sg::GraspService service(snapshot, std::move(scenes));
      if (!static_dir.empty()) service.set_static_dir(static_dir);
      const int port = service.start(serve_host, serve_port);
      std::cout << "listening on http://" << serve_host << ":" << port << std::endl;
      int sig = 0;
      sigwait(&signals, &sig);
      service.stop();
    } else if (*grad) {
      const auto report = sg::end_to_end_gradcheck(seed, grad_count, grad_step, grad_floor);
      for (const auto& e : report.entries) {
        std::printf("%-40s [%6zu] analytic % .6e numeric % .6e rel %.2e\n", e.parameter.c_str(),
                    e.index, e.analytic, e.numeric, e.rel_error);
      }
      std::printf("max relative error %.3e (tolerance %.1e), %d probes redrawn at kinks\n",
                  report.max_rel_error, grad_tol, report.redrawn);
      return report.max_rel_error < grad_tol ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
