#include "sketchgrasp/engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "sketchgrasp/optim.hpp"

namespace sketchgrasp {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw std::invalid_argument("lr decay must be in (0, 1)");
  if (decay_interval < 1) throw std::invalid_argument("decay interval must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (positive_query_ratio < 0.0 || positive_query_ratio > 1.0) {
    throw std::invalid_argument("positive query ratio must be in [0, 1]");
  }
  model.validate();
}

TrainConfig paper_train_config() {
  TrainConfig cfg;
  cfg.iterations = 50000;
  cfg.model.feature_dim = 1024;
  return cfg;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"learning_rate", c.learning_rate},
         {"lr_decay", c.lr_decay},
         {"decay_interval", c.decay_interval},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"batch_size", c.batch_size},
         {"iterations", c.iterations},
         {"positive_query_ratio", c.positive_query_ratio},
         {"augment", c.augment},
         {"seed", c.seed},
         {"model", json::parse(config_to_json(c.model))}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.decay_interval = j.at("decay_interval").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.iterations = j.at("iterations").get<int>();
  c.positive_query_ratio = j.at("positive_query_ratio").get<double>();
  c.augment = j.at("augment").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model = config_from_json(j.at("model").dump());
  c.validate();
  return c;
}

double lr_at(int iteration, const TrainConfig& cfg) {
  if (iteration < 0) throw std::invalid_argument("lr_at: negative iteration");
  return cfg.learning_rate * std::pow(cfg.lr_decay, iteration / cfg.decay_interval);
}

std::string metric_to_json(const MetricRecord& m) {
  return json{{"iter", m.iter}, {"loss", m.loss}, {"loss_gp", m.loss_gp},
              {"loss_gd", m.loss_gd}, {"lr", m.lr}}
      .dump();
}

SceneSample fit_scene(const SceneSample& scene, int size) {
  if (scene.image.width == size && scene.image.height == size) return scene;
  const Letterbox lb = letterbox(scene.image, size);
  SceneSample out{scene.id, lb.image, {}};
  const double s = lb.scale;
  for (const auto& o : scene.objects) {
    SceneObject f{o.category, {}, {}};
    for (const auto& p : o.outline) f.outline.push_back({p.x * s, p.y * s});
    for (const auto& g : o.grasps) f.grasps.emplace_back(g.x * s, g.y * s, g.w * s, g.h * s, g.theta);
    out.objects.push_back(std::move(f));
  }
  return out;
}

namespace {

std::vector<LabeledGrasp> labeled_grasps(const SceneSample& scene) {
  std::vector<LabeledGrasp> out;
  for (const auto& o : scene.objects) {
    for (const auto& g : o.grasps) out.push_back({g, o.category});
  }
  return out;
}

struct PreparedScene {
  Tensor image;
  Tensor flipped;
  std::vector<LabeledGrasp> grasps;
  std::vector<LabeledGrasp> flipped_grasps;
  std::vector<std::string> present;
};

Tensor brighten(const Tensor& image, float factor) {
  std::vector<float> v(image.data().begin(), image.data().end());
  for (float& x : v) x = std::min(1.0f, x * factor);
  return Tensor::from_data(image.shape(), std::move(v));
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                  const SketchBank& bank, const TrainHooks& hooks) {
  cfg.validate();
  return train_from(make_model(cfg.model, derive_seed(cfg.seed, 0x696e6974ULL)), cfg, scenes, bank,
                    hooks);
}

TrainResult train_from(Model model, const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                       const SketchBank& bank, const TrainHooks& hooks) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("train: no training scenes");
  const int size = cfg.model.image_size;

  std::vector<std::string> vocabulary = bank.categories();
  std::map<std::string, std::vector<SketchGraph>> graphs;
  if (auto train_split = bank.splits.find("train"); train_split != bank.splits.end()) {
    for (const auto& [cat, list] : train_split->second) {
      for (const auto& d : list) graphs[cat].push_back(build_graph(d, cfg.model.sketch_points));
    }
  }

  std::vector<PreparedScene> prepared;
  for (const auto& raw : scenes) {
    const SceneSample s = fit_scene(raw, size);
    PreparedScene p;
    for (const auto& cat : s.categories()) {
      if (graphs[cat].empty()) {
        throw std::invalid_argument("train: vocabulary mismatch, no train sketches for '" + cat +
                                    "' (scene " + s.id + ")");
      }
    }
    p.image = to_tensor(s.image);
    p.grasps = labeled_grasps(s);
    p.present = s.categories();
    if (cfg.augment) {
      const SceneSample f = flip_scene(s);
      p.flipped = to_tensor(f.image);
      p.flipped_grasps = labeled_grasps(f);
    }
    prepared.push_back(std::move(p));
  }
  std::erase_if(vocabulary, [&](const std::string& c) { return graphs[c].empty(); });

  std::vector<Tensor> params = model.parameters();
  OptimizerState state = make_optimizer_state(
      params, {static_cast<float>(cfg.learning_rate), static_cast<float>(cfg.momentum),
               static_cast<float>(cfg.weight_decay)});

  TrainResult result;
  const float inv_batch = 1.0f / cfg.batch_size;
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::uint64_t step_seed = derive_seed(cfg.seed, 0x73746570ULL + it);
    Rng rng(step_seed);
    for (Tensor& p : params) p.zero_grad();
    MetricRecord rec;
    rec.iter = it + 1;
    rec.lr = lr_at(it, cfg);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const PreparedScene& scene = prepared[rng.uniform_int(0, int(prepared.size()) - 1)];
      std::vector<std::string> absent;
      for (const auto& c : vocabulary) {
        if (std::find(scene.present.begin(), scene.present.end(), c) == scene.present.end()) {
          absent.push_back(c);
        }
      }
      const bool want_present = rng.bernoulli(cfg.positive_query_ratio);
      const auto& pool = (want_present && !scene.present.empty()) || absent.empty() ? scene.present
                                                                                    : absent;
      const std::string& queried = pool[rng.uniform_int(0, int(pool.size()) - 1)];
      const auto& sketches = graphs[queried];
      const SketchGraph& query = sketches[rng.uniform_int(0, int(sketches.size()) - 1)];

      const bool flip = cfg.augment && rng.bernoulli(0.5);
      const float bright = cfg.augment ? static_cast<float>(rng.uniform(0.8, 1.2)) : 1.0f;
      Tensor image = flip ? scene.flipped : scene.image;
      if (bright != 1.0f) image = brighten(image, bright);
      const TrainingExample ex{image, query, queried, flip ? scene.flipped_grasps : scene.grasps};

      const LossBreakdown losses = compute_losses(model, ex, rng);
      const double total = losses.total.item();
      if (!std::isfinite(total)) {
        throw NonFiniteError("train: non-finite loss at iteration " + std::to_string(it + 1) +
                             " (step seed " + std::to_string(step_seed) + ", sample " +
                             std::to_string(b) + ", query '" + queried + "')");
      }
      backward(scale(losses.total, inv_batch));
      rec.loss += total * inv_batch;
      rec.loss_gp += losses.proposal.item() * inv_batch;
      rec.loss_gd += losses.detection.item() * inv_batch;
    }
    state.hyper.learning_rate = static_cast<float>(rec.lr);
    sgd_step(params, state);
    result.log.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec, model);
  }
  result.iterations = cfg.iterations;
  result.model = std::move(model);
  return result;
}

std::vector<EvalReport> evaluate_predictor(const GraspPredictor& predictor,
                                           const std::vector<SceneSample>& scenes,
                                           const SketchBank& bank, const EvalConfig& cfg,
                                           int sketch_points) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: empty scene split");
  if (cfg.ks.empty()) throw std::invalid_argument("evaluate: no k values");
  const int k_max = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  std::vector<EvalReport> reports;
  for (const auto& split : cfg.sketch_splits) {
    std::vector<QueryOutcome> queries;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
      const SceneSample& scene = scenes[si];
      const auto cats = scene.categories();
      for (std::size_t ci = 0; ci < cats.size(); ++ci) {
        const auto& list = bank.get(split, cats[ci]);
        Rng rng(derive_seed(derive_seed(cfg.seed, si), ci));
        const RawDrawing& sketch = list[rng.uniform_int(0, int(list.size()) - 1)];
        QueryOutcome q;
        q.category = cats[ci];
        q.ranked = predictor(si, scene, build_graph(sketch, sketch_points), cats[ci], k_max);
        if (static_cast<int>(q.ranked.size()) > k_max) q.ranked.resize(k_max);
        for (const auto& o : scene.objects) {
          if (o.category == cats[ci]) q.gts.insert(q.gts.end(), o.grasps.begin(), o.grasps.end());
        }
        queries.push_back(std::move(q));
      }
    }
    EvalReport report = precision_recall_at_k(queries, cfg.ks);
    report.label = split;
    reports.push_back(std::move(report));
  }
  return reports;
}

std::vector<EvalReport> evaluate(const Model& model, const std::vector<SceneSample>& scenes,
                                 const SketchBank& bank, const EvalConfig& cfg) {
  std::vector<SceneSample> fitted;
  for (const auto& s : scenes) fitted.push_back(fit_scene(s, model.config.image_size));
  std::map<std::size_t, Tensor> features;
  GraspPredictor predictor = [&](std::size_t si, const SceneSample& scene, const SketchGraph& query,
                                 const std::string&, int k) {
    NoGradGuard no_grad;
    auto it = features.find(si);
    if (it == features.end()) {
      it = features.emplace(si, encode_image(model, to_tensor(scene.image))).first;
    }
    std::vector<OrientedRect> out;
    for (const auto& p : predict_from_features(model, it->second, query, k)) out.push_back(p.rect);
    return out;
  };
  return evaluate_predictor(predictor, fitted, bank, cfg, model.config.sketch_points);
}

std::vector<GraspPrediction> infer(const Model& model, const Image& image,
                                   const RawDrawing& strokes, int k, double min_score) {
  if (k <= 0) throw std::invalid_argument("k must be positive");
  const SketchGraph graph = build_graph(strokes, model.config.sketch_points);
  const Letterbox lb = letterbox(image, model.config.image_size);
  const double threshold = min_score < 0.0 ? model.config.score_threshold : min_score;
  std::vector<GraspPrediction> out;
  for (auto p : predict(model, to_tensor(lb.image), graph, k)) {
    if (p.score < threshold) continue;
    const double s = lb.scale;
    p.rect = OrientedRect(p.rect.x / s, p.rect.y / s, p.rect.w / s, p.rect.h / s, p.rect.theta);
    out.push_back(p);
  }
  return out;
}

std::vector<SceneSample> load_split(const Dataset& dataset, const std::string& split,
                                    int image_size) {
  const auto idx = dataset.split(split);
  if (idx.empty()) throw DatasetError("dataset split '" + split + "' is empty");
  std::vector<SceneSample> out;
  for (std::size_t i : idx) out.push_back(fit_scene(dataset.load(i), image_size));
  return out;
}

namespace {

double smooth_l1_f64(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

// The joint loss for a frozen plan, with the loss formulas evaluated in double
// precision on the network outputs. Removes the float rounding of the scalar
// loss, which otherwise dominates small-step finite differences.
double joint_loss_f64(const Model& model, const TrainingExample& ex, const TrainingPlan& plan) {
  NoGradGuard no_grad;
  const ModelConfig& cfg = model.config;
  const FeatureMaps f = compute_features(model, ex.image, ex.query);
  const RpnOutput rpn = rpn_forward(model, f.fused);
  double cls = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < plan.rpn.anchor_index.size(); ++i) {
    const int a = plan.rpn.anchor_index[i];
    const double z = rpn.logits.data()[a];
    const double p = plan.rpn.labels[i];
    cls += std::max(z, 0.0) - z * p + std::log1p(std::exp(-std::abs(z)));
    if (p > 0.0) {
      for (int c = 0; c < 4; ++c) {
        reg += p * smooth_l1_f64(double(rpn.deltas.data()[4 * a + c]) - plan.rpn.targets[4 * i + c]);
      }
    }
  }
  double loss = cls / cfg.rpn_batch + reg / cfg.rpn_batch;
  if (!plan.rois.empty()) {
    const RoiOutput roi = roi_forward(model, f.fused, plan.rois);
    cls = reg = 0.0;
    for (std::size_t i = 0; i < plan.rois.size(); ++i) {
      const float* row = roi.class_logits.data().data() + i * kNumGraspClasses;
      const double top = *std::max_element(row, row + kNumGraspClasses);
      double denom = 0.0;
      for (int c = 0; c < kNumGraspClasses; ++c) denom += std::exp(row[c] - top);
      cls += top + std::log(denom) - row[plan.roi.labels[i]];
      if (plan.roi.labels[i] != 0) {
        for (int c = 0; c < 4; ++c) {
          reg += smooth_l1_f64(double(roi.deltas.data()[4 * i + c]) - plan.roi.deltas[4 * i + c]);
        }
      }
    }
    loss += cls / cfg.roi_assign.batch_size + reg / cfg.roi_assign.batch_size;
  }
  return loss;
}

}  // namespace

GradCheckReport end_to_end_gradcheck(std::uint64_t seed, int count, double step, double floor) {
  ModelConfig cfg;
  // Few early relu units keep kinks rare inside the finite-difference step.
  cfg.image_size = 32;
  cfg.feature_dim = 8;
  cfg.sketch_points = 16;
  cfg.image_widths = {4, 8, 8};
  cfg.anchor_scales = {8.0, 16.0, 32.0};
  cfg.roi_size = 3;
  cfg.roi_hidden = 16;
  cfg.rpn_batch = 32;
  cfg.roi_assign.batch_size = 16;
  cfg.train_proposals = {200, 0.7, 20, 1.0};
  const Model model = make_model(cfg, seed);

  const SceneSample scene =
      fit_scene(synth_scene(derive_seed(seed, 1), {64, kSynthCategories, 2, 3}), cfg.image_size);
  const std::string queried = scene.objects.front().category;
  std::vector<LabeledGrasp> grasps;
  for (const auto& o : scene.objects) {
    for (const auto& g : o.grasps) grasps.push_back({g, o.category});
  }
  // Uniform noise pixels instead of the render: flat regions put many relu
  // units at the same pre-activation, so they would all switch inside one step.
  Tensor image = to_tensor(scene.image);
  Rng texture(derive_seed(seed, 5));
  for (float& v : image.mutable_data()) v = static_cast<float>(texture.uniform(0.0, 1.0));
  const TrainingExample ex{image,
                           build_graph(synth_sketch(queried, derive_seed(seed, 2)), cfg.sketch_points),
                           queried, grasps};

  NamedTensors params = model.named_parameters();
  for (auto& [name, t] : params) t.zero_grad();
  Rng rng(derive_seed(seed, 3));
  TrainingPlan plan;
  backward(compute_losses(model, ex, rng, nullptr, &plan).total);

  // Spread the probes over the top-level modules.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params[i].first;
    groups[name.substr(0, name.find('.'))].push_back(i);
  }
  std::vector<std::vector<std::size_t>> order;
  for (auto& [g, members] : groups) order.push_back(members);

  GradCheckReport report;
  Rng pick(derive_seed(seed, 4));
  NoGradGuard no_grad;
  for (int c = 0; c < count; ++c) {
    const auto& members = order[c % order.size()];
    auto& [name, t] = params[members[pick.uniform_int(0, int(members.size()) - 1)]];
    auto draw = [&] {
      // Prefer an entry that receives gradient; dead units make the probe vacuous.
      std::size_t i = pick.uniform_int(0, int(t.numel()) - 1);
      for (int attempt = 0; attempt < 32 && t.grad()[i] == 0.0f; ++attempt) {
        i = pick.uniform_int(0, int(t.numel()) - 1);
      }
      return i;
    };
    auto loss_at = [&](std::size_t i, float value) {
      const float original = t.data()[i];
      t.mutable_data()[i] = value;
      const double loss = joint_loss_f64(model, ex, plan);
      t.mutable_data()[i] = original;
      return loss;
    };
    auto central = [&](std::size_t i, double h) {
      const float p = t.data()[i];
      const float hi = static_cast<float>(p + h), lo = static_cast<float>(p - h);
      return (loss_at(i, hi) - loss_at(i, lo)) / (double(hi) - lo);
    };
    // A relu or max switch inside [p - h, p + h] shows up as disagreement
    // between the central differences at h and h/2. Such points have no valid
    // finite-difference reference, so the entry is redrawn.
    GradCheckEntry entry;
    for (int attempt = 0; attempt < 8; ++attempt) {
      const std::size_t idx = draw();
      const double numeric = central(idx, step);
      const double half = central(idx, 0.5 * step);
      const double analytic = t.grad()[idx];
      entry = {name, idx, analytic, numeric,
               std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), floor})};
      const double spread =
          std::abs(numeric - half) / std::max({std::abs(numeric), std::abs(half), floor});
      if (spread < 5e-3) break;
      ++report.redrawn;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace sketchgrasp
