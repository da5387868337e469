#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sketchgrasp/detection.hpp"
#include "sketchgrasp/encoders.hpp"
#include "sketchgrasp/query_fusion.hpp"

namespace sketchgrasp {

enum class SketchEncoderKind { Graph, Image };

std::string to_string(SketchEncoderKind kind);
SketchEncoderKind sketch_encoder_from_string(const std::string& name);

/// Architecture and detection hyperparameters. Defaults are the desk-scale
/// configuration (128 px images, D = 64, N_s = 128, stride-8 image features
/// with two residual context convs).
struct ModelConfig {
  int image_size = 128;
  int feature_dim = 64;
  int sketch_points = 128;
  std::vector<int> image_widths{16, 32, 64};
  int image_context_convs = 2;
  std::vector<int> sketch_image_widths{32, 64, 128, 256};
  SketchEncoderKind sketch_encoder = SketchEncoderKind::Graph;
  bool dynamic_knn = false;

  std::vector<double> anchor_scales = kDefaultAnchorScales;
  std::vector<double> anchor_ratios = kDefaultAnchorRatios;
  RpnAssignConfig rpn_assign{};
  int rpn_batch = 256;
  double rpn_positive_fraction = 0.5;
  ProposalConfig train_proposals{2000, 0.7, 300, 1.0};
  ProposalConfig test_proposals{2000, 0.7, 300, 1.0};
  bool add_gt_proposals = true;

  int roi_size = 7;
  int roi_hidden = 128;
  RoiAssignConfig roi_assign{0.5, 64, 0.25};

  double decode_nms = 0.3;
  double score_threshold = 0.5;

  int stride() const { return 1 << image_widths.size(); }
  int feature_size() const { return image_size / stride(); }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

struct RpnHead {
  Conv conv;  // 3x3 D -> D, relu
  Conv cls;   // 1x1 D -> A
  Conv reg;   // 1x1 D -> 4A
};

struct RoiHead {
  Dense fc;   // P*P*D -> hidden, relu
  Dense cls;  // hidden -> 19
  Dense reg;  // hidden -> 4
};

struct Model {
  ModelConfig config;
  ImageEncoderParams image_encoder;
  SketchEncoderParams sketch_encoder;
  ImageEncoderParams sketch_image_encoder;  // used when config.sketch_encoder == Image
  FusionParams fusion;
  RpnHead rpn;
  RoiHead roi;
  AnchorSet anchors;

  /// Every trainable tensor in a fixed order, with stable names.
  NamedTensors named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t sketch_encoder_parameter_count() const;
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);
/// Deep copy of parameter values (no shared storage).
Model clone_model(const Model& model);

struct FeatureMaps {
  Tensor image;      // F_c   [H x W x D]
  Tensor sketch;     // F_s   [1 x 1 x D]
  Tensor relevance;  // F_rel [H x W x D]
  Tensor fused;      // F     [H x W x D]
};

Tensor encode_image(const Model& model, const Tensor& image);
Tensor encode_sketch(const Model& model, const SketchGraph& graph);
FeatureMaps compute_features(const Model& model, const Tensor& image, const SketchGraph& query);
FeatureMaps compute_features(const Model& model, const Tensor& image_features,
                             const Tensor& sketch_feature);

struct RpnOutput {
  Tensor logits;  // [anchors x 1]
  Tensor deltas;  // [anchors x 4]
};

RpnOutput rpn_forward(const Model& model, const Tensor& fused);

struct RoiOutput {
  Tensor class_logits;  // [R x 19]
  Tensor deltas;        // [R x 4]
};

RoiOutput roi_forward(const Model& model, const Tensor& fused, std::span<const Box> rois);

/// One scene/query pair, ready for the network.
struct TrainingExample {
  Tensor image;  // [S x S x 3], values in [0, 1]
  SketchGraph query;
  std::string queried;
  std::vector<LabeledGrasp> grasps;  // every object's grasps, tagged by category
};

/// The discrete choices of one step: sampled anchors, the ROI set and its targets.
struct TrainingPlan {
  RpnSample rpn;
  std::vector<Box> rois;
  RoiTargets roi;
};

struct LossBreakdown {
  Tensor total;
  Tensor proposal;   // L_gp
  Tensor detection;  // L_gd
};

/// Full forward pass and joint loss. When `fixed` is given its sampling is
/// reused, which makes the loss a smooth function of the parameters.
LossBreakdown compute_losses(const Model& model, const TrainingExample& example, Rng& rng,
                             const TrainingPlan* fixed = nullptr, TrainingPlan* used = nullptr);

std::vector<OrientedRect> queried_grasps(const TrainingExample& example);

/// Ranked grasps for an image tensor and a query graph; no gradient recording.
std::vector<GraspPrediction> predict(const Model& model, const Tensor& image,
                                     const SketchGraph& query, int k);
/// Same, reusing precomputed image features.
std::vector<GraspPrediction> predict_from_features(const Model& model, const Tensor& image_features,
                                                   const SketchGraph& query, int k);

}  // namespace sketchgrasp
