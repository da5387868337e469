#include "sketchgrasp/model.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace sketchgrasp {

namespace {

using nlohmann::json;

json proposals_json(const ProposalConfig& p) {
  return {{"pre_nms_top_n", p.pre_nms_top_n},
          {"nms_iou", p.nms_iou},
          {"post_nms_top_n", p.post_nms_top_n},
          {"min_size", p.min_size}};
}

ProposalConfig proposals_from(const json& j) {
  return {j.at("pre_nms_top_n").get<int>(), j.at("nms_iou").get<double>(),
          j.at("post_nms_top_n").get<int>(), j.at("min_size").get<double>()};
}

float sigmoid(float z) { return static_cast<float>(1.0 / (1.0 + std::exp(-double(z)))); }

}  // namespace

std::string to_string(SketchEncoderKind kind) {
  return kind == SketchEncoderKind::Graph ? "graph" : "image";
}

SketchEncoderKind sketch_encoder_from_string(const std::string& name) {
  if (name == "graph") return SketchEncoderKind::Graph;
  if (name == "image") return SketchEncoderKind::Image;
  throw std::invalid_argument("unknown sketch encoder '" + name + "' (expected graph or image)");
}

void ModelConfig::validate() const {
  if (feature_dim <= 0) throw std::invalid_argument("feature_dim must be positive");
  if (sketch_points < 2) throw std::invalid_argument("sketch_points must be at least 2");
  if (image_widths.empty()) throw std::invalid_argument("image encoder needs at least one block");
  if (image_context_convs < 0) throw std::invalid_argument("image_context_convs must be non-negative");
  if (image_size <= 0 || image_size % stride() != 0) {
    throw std::invalid_argument("image_size " + std::to_string(image_size) +
                                " must be a positive multiple of the encoder stride " +
                                std::to_string(stride()));
  }
  if (sketch_encoder == SketchEncoderKind::Image &&
      image_size % (1 << sketch_image_widths.size()) != 0) {
    throw std::invalid_argument("image_size must be divisible by the sketch raster encoder stride");
  }
  if (anchor_scales.empty() || anchor_ratios.empty()) {
    throw std::invalid_argument("anchor scales and ratios must be non-empty");
  }
  if (roi_size < 1 || roi_hidden < 1) throw std::invalid_argument("bad ROI head size");
  if (rpn_batch < 1 || roi_assign.batch_size < 1) throw std::invalid_argument("bad batch sizes");
}

std::string config_to_json(const ModelConfig& c) {
  json j{{"image_size", c.image_size},
         {"feature_dim", c.feature_dim},
         {"sketch_points", c.sketch_points},
         {"image_widths", c.image_widths},
         {"image_context_convs", c.image_context_convs},
         {"sketch_image_widths", c.sketch_image_widths},
         {"sketch_encoder", to_string(c.sketch_encoder)},
         {"dynamic_knn", c.dynamic_knn},
         {"anchor_scales", c.anchor_scales},
         {"anchor_ratios", c.anchor_ratios},
         {"rpn_positive_iou", c.rpn_assign.positive_iou},
         {"rpn_negative_iou", c.rpn_assign.negative_iou},
         {"rpn_use_hull", c.rpn_assign.use_hull},
         {"rpn_batch", c.rpn_batch},
         {"rpn_positive_fraction", c.rpn_positive_fraction},
         {"train_proposals", proposals_json(c.train_proposals)},
         {"test_proposals", proposals_json(c.test_proposals)},
         {"add_gt_proposals", c.add_gt_proposals},
         {"roi_size", c.roi_size},
         {"roi_hidden", c.roi_hidden},
         {"roi_foreground_iou", c.roi_assign.foreground_iou},
         {"roi_batch", c.roi_assign.batch_size},
         {"roi_positive_fraction", c.roi_assign.positive_fraction},
         {"decode_nms", c.decode_nms},
         {"score_threshold", c.score_threshold}};
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.sketch_points = j.at("sketch_points").get<int>();
  c.image_widths = j.at("image_widths").get<std::vector<int>>();
  c.image_context_convs = j.at("image_context_convs").get<int>();
  c.sketch_image_widths = j.at("sketch_image_widths").get<std::vector<int>>();
  c.sketch_encoder = sketch_encoder_from_string(j.at("sketch_encoder").get<std::string>());
  c.dynamic_knn = j.at("dynamic_knn").get<bool>();
  c.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  c.anchor_ratios = j.at("anchor_ratios").get<std::vector<double>>();
  c.rpn_assign.positive_iou = j.at("rpn_positive_iou").get<double>();
  c.rpn_assign.negative_iou = j.at("rpn_negative_iou").get<double>();
  c.rpn_assign.use_hull = j.at("rpn_use_hull").get<bool>();
  c.rpn_batch = j.at("rpn_batch").get<int>();
  c.rpn_positive_fraction = j.at("rpn_positive_fraction").get<double>();
  c.train_proposals = proposals_from(j.at("train_proposals"));
  c.test_proposals = proposals_from(j.at("test_proposals"));
  c.add_gt_proposals = j.at("add_gt_proposals").get<bool>();
  c.roi_size = j.at("roi_size").get<int>();
  c.roi_hidden = j.at("roi_hidden").get<int>();
  c.roi_assign.foreground_iou = j.at("roi_foreground_iou").get<double>();
  c.roi_assign.batch_size = j.at("roi_batch").get<int>();
  c.roi_assign.positive_fraction = j.at("roi_positive_fraction").get<double>();
  c.decode_nms = j.at("decode_nms").get<double>();
  c.score_threshold = j.at("score_threshold").get<double>();
  c.validate();
  return c;
}

NamedTensors Model::named_parameters() const {
  NamedTensors out;
  collect(out, "image_encoder", image_encoder);
  if (config.sketch_encoder == SketchEncoderKind::Graph) {
    collect(out, "sketch_encoder", sketch_encoder);
  } else {
    collect(out, "sketch_image_encoder", sketch_image_encoder);
  }
  collect(out, "fusion", fusion);
  collect(out, "rpn.conv", rpn.conv);
  collect(out, "rpn.cls", rpn.cls);
  collect(out, "rpn.reg", rpn.reg);
  collect(out, "roi.fc", roi.fc);
  collect(out, "roi.cls", roi.cls);
  collect(out, "roi.reg", roi.reg);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Model::sketch_encoder_parameter_count() const {
  NamedTensors p;
  if (config.sketch_encoder == SketchEncoderKind::Graph) {
    collect(p, "s", sketch_encoder);
  } else {
    collect(p, "s", sketch_image_encoder);
  }
  return count_parameters(p);
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const int d = cfg.feature_dim;
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  m.image_encoder = make_image_encoder(3, cfg.image_widths, d, rng, cfg.image_context_convs);
  if (cfg.sketch_encoder == SketchEncoderKind::Graph) {
    m.sketch_encoder = make_sketch_encoder(d, rng);
    m.sketch_encoder.dynamic_knn = cfg.dynamic_knn;
  } else {
    m.sketch_image_encoder = make_image_encoder(1, cfg.sketch_image_widths, d, rng);
  }
  m.fusion = make_fusion(d, rng);
  const int per_cell = static_cast<int>(cfg.anchor_scales.size() * cfg.anchor_ratios.size());
  m.rpn.conv = make_conv(3, d, d, 1, 1, rng);
  m.rpn.cls = make_conv(1, d, per_cell, 1, 0, rng);
  m.rpn.reg = make_conv(1, d, 4 * per_cell, 1, 0, rng);
  // Small-magnitude output layers keep the initial losses near their priors.
  for (Conv* head : {&m.rpn.cls, &m.rpn.reg}) {
    for (float& v : head->w.mutable_data()) v *= 0.1f;
  }
  m.roi.fc = make_dense(cfg.roi_size * cfg.roi_size * d, cfg.roi_hidden, rng);
  m.roi.cls = make_dense(cfg.roi_hidden, kNumGraspClasses, rng);
  m.roi.reg = make_dense(cfg.roi_hidden, 4, rng);
  for (Dense* head : {&m.roi.cls, &m.roi.reg}) {
    for (float& v : head->w.mutable_data()) v *= 0.1f;
  }
  const int fs = cfg.feature_size();
  m.anchors = gen_anchors(fs, fs, cfg.stride(), cfg.anchor_scales, cfg.anchor_ratios);
  return m;
}

Model clone_model(const Model& model) {
  Model copy = make_model(model.config, 0);
  const NamedTensors src = model.named_parameters();
  NamedTensors dst = copy.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto from = src[i].second.data();
    auto to = dst[i].second.mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
  }
  return copy;
}

Tensor encode_image(const Model& model, const Tensor& image) {
  // Centered input; the encoder contract itself takes raw tensors.
  return image_encode(add(image, Tensor::full({image.dim(2)}, -0.5f)), model.image_encoder);
}

Tensor encode_sketch(const Model& model, const SketchGraph& graph) {
  if (model.config.sketch_encoder == SketchEncoderKind::Graph) {
    return sketch_encode(graph, model.sketch_encoder);
  }
  return sketch_encode_image_baseline(rasterize_sketch(graph, model.config.image_size),
                                      model.sketch_image_encoder);
}

FeatureMaps compute_features(const Model& model, const Tensor& image_features,
                             const Tensor& sketch_feature) {
  FeatureMaps f;
  f.image = image_features;
  f.sketch = sketch_feature;
  f.relevance = relevance(f.image, f.sketch);
  f.fused = fuse(f.image, f.relevance, model.fusion);
  return f;
}

FeatureMaps compute_features(const Model& model, const Tensor& image, const SketchGraph& query) {
  return compute_features(model, encode_image(model, image), encode_sketch(model, query));
}

RpnOutput rpn_forward(const Model& model, const Tensor& fused) {
  const Tensor hidden = relu(model.rpn.conv(fused));
  const int n = static_cast<int>(model.anchors.boxes.size());
  return {reshape(model.rpn.cls(hidden), {n, 1}), reshape(model.rpn.reg(hidden), {n, 4})};
}

RoiOutput roi_forward(const Model& model, const Tensor& fused, std::span<const Box> rois) {
  const Tensor pooled = roi_pool_batch(fused, rois, model.config.stride(), model.config.roi_size);
  const Tensor hidden = relu(model.roi.fc(pooled));
  return {model.roi.cls(hidden), model.roi.reg(hidden)};
}

std::vector<OrientedRect> queried_grasps(const TrainingExample& example) {
  std::vector<OrientedRect> out;
  for (const auto& g : example.grasps) {
    if (g.category == example.queried) out.push_back(g.rect);
  }
  return out;
}

LossBreakdown compute_losses(const Model& model, const TrainingExample& example, Rng& rng,
                             const TrainingPlan* fixed, TrainingPlan* used) {
  const ModelConfig& cfg = model.config;
  const FeatureMaps f = compute_features(model, example.image, example.query);
  const RpnOutput rpn = rpn_forward(model, f.fused);

  TrainingPlan plan;
  if (fixed) {
    plan = *fixed;
  } else {
    const std::vector<OrientedRect> positives = queried_grasps(example);
    const RpnTargets targets = assign_rpn_targets(model.anchors, positives, cfg.rpn_assign);
    plan.rpn = sample_rpn_batch(targets, cfg.rpn_batch, cfg.rpn_positive_fraction, rng);

    std::vector<float> scores(rpn.logits.numel());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = sigmoid(rpn.logits.data()[i]);
    const double size = cfg.image_size;
    ProposalBatch proposals = select_proposals(model.anchors, scores, rpn.deltas.data(), size,
                                               size, cfg.train_proposals);
    std::vector<Box> rois = std::move(proposals.boxes);
    if (cfg.add_gt_proposals) {
      for (const auto& g : positives) rois.push_back(clip_box(grasp_box(g), size, size));
    }
    std::erase_if(rois, [](const Box& b) { return !(b.w > 0.0) || !(b.h > 0.0); });
    const RoiTargets targets_roi =
        assign_roi_targets(rois, example.grasps, example.queried, cfg.roi_assign, rng);
    for (int idx : targets_roi.proposal_index) plan.rois.push_back(rois[idx]);
    plan.roi = targets_roi;
    for (std::size_t i = 0; i < plan.roi.proposal_index.size(); ++i) {
      plan.roi.proposal_index[i] = static_cast<int>(i);
    }
  }

  const Tensor sampled_logits = gather_rows(rpn.logits, plan.rpn.anchor_index);
  const Tensor sampled_deltas = gather_rows(rpn.deltas, plan.rpn.anchor_index);
  LossBreakdown out;
  out.proposal = rpn_loss(sampled_logits, sampled_deltas, plan.rpn.labels, plan.rpn.targets,
                          cfg.rpn_batch, cfg.rpn_batch);
  if (plan.rois.empty()) {
    out.detection = Tensor::zeros({1});
  } else {
    const RoiOutput roi = roi_forward(model, f.fused, plan.rois);
    const double n = cfg.roi_assign.batch_size;
    out.detection = roi_loss(roi.class_logits, roi.deltas, plan.roi.labels, plan.roi.deltas, n, n);
  }
  out.total = joint_loss(out.proposal, out.detection);
  if (used) *used = std::move(plan);
  return out;
}

std::vector<GraspPrediction> predict_from_features(const Model& model, const Tensor& image_features,
                                                   const SketchGraph& query, int k) {
  if (k <= 0) throw std::invalid_argument("k must be positive");
  NoGradGuard no_grad;
  const ModelConfig& cfg = model.config;
  const FeatureMaps f = compute_features(model, image_features, encode_sketch(model, query));
  const RpnOutput rpn = rpn_forward(model, f.fused);
  std::vector<float> scores(rpn.logits.numel());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = sigmoid(rpn.logits.data()[i]);
  const double size = cfg.image_size;
  const ProposalBatch proposals =
      select_proposals(model.anchors, scores, rpn.deltas.data(), size, size, cfg.test_proposals);
  if (proposals.boxes.empty()) return {};
  const RoiOutput roi = roi_forward(model, f.fused, proposals.boxes);
  return decode_grasps(roi.class_logits.data(), roi.deltas.data(), proposals.boxes, k,
                       {cfg.decode_nms, size, size});
}

std::vector<GraspPrediction> predict(const Model& model, const Tensor& image,
                                     const SketchGraph& query, int k) {
  if (k <= 0) throw std::invalid_argument("k must be positive");
  NoGradGuard no_grad;
  return predict_from_features(model, encode_image(model, image), query, k);
}

}  // namespace sketchgrasp
