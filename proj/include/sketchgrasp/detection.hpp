#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "sketchgrasp/geometry.hpp"
#include "sketchgrasp/ops.hpp"
#include "sketchgrasp/rng.hpp"

namespace sketchgrasp {

constexpr int kOrientationBins = 18;
constexpr int kNumGraspClasses = kOrientationBins + 1;  // class 0 = not the queried object
constexpr double kBinDegrees = 180.0 / kOrientationBins;

/// Nearest bin center in {10, 20, ..., 180} after normalizing to (0, 180];
/// ties resolve upward. Returns 1..18.
int theta_to_label(double theta_deg);
/// 10 * label, for label in 1..18.
double label_to_theta(int label);

/// Axis-aligned box in center form, image pixels.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double x0() const { return x - 0.5 * w; }
  double y0() const { return y - 0.5 * h; }
  double x1() const { return x + 0.5 * w; }
  double y1() const { return y + 0.5 * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

using Delta = std::array<float, 4>;

double box_iou(const Box& a, const Box& b);
Box clip_box(const Box& b, double image_w, double image_h);
/// ((x - xa) / wa, (y - ya) / ha, log(w / wa), log(h / ha)).
Delta encode_delta(const Box& anchor, const Box& target);
Box apply_delta(const Box& anchor, const Delta& delta);
/// The grasp's own (x, y, w, h), ignoring rotation.
Box grasp_box(const OrientedRect& g);
/// Axis-aligned hull of the rotated grasp.
Box grasp_hull(const OrientedRect& g);

struct AnchorSet {
  int rows = 0;
  int cols = 0;
  int stride = 0;
  int per_cell = 0;
  std::vector<Box> boxes;  // index = (row * cols + col) * per_cell + a
};

inline const std::vector<double> kDefaultAnchorScales{16.0, 32.0, 64.0};
inline const std::vector<double> kDefaultAnchorRatios{0.5, 1.0, 2.0};

/// Anchors centered on each feature cell; ratio is h / w, so a ratio-1 anchor of
/// scale s is s x s.
AnchorSet gen_anchors(int rows, int cols, int stride, std::span<const double> scales,
                      std::span<const double> ratios);

struct RpnAssignConfig {
  double positive_iou = 0.7;
  double negative_iou = 0.3;
  bool use_hull = false;
};

struct RpnTargets {
  std::vector<int> labels;     // 1 positive, 0 negative, -1 ignored
  std::vector<Delta> deltas;   // zero for non-positive anchors
  std::vector<double> max_iou;
};

/// `queried` holds only the grasps of the sketch-queried object(s). An anchor is
/// positive if IoU >= positive_iou with some grasp or if it attains the highest
/// IoU for some grasp; negative if its best IoU < negative_iou.
RpnTargets assign_rpn_targets(const AnchorSet& anchors, std::span<const OrientedRect> queried,
                              const RpnAssignConfig& cfg = {});

struct RpnSample {
  std::vector<int> anchor_index;
  std::vector<float> labels;   // p in {0, 1}
  std::vector<float> targets;  // 4 per sample
};

/// Up to batch_size anchors, at most positive_fraction of them positive.
RpnSample sample_rpn_batch(const RpnTargets& targets, int batch_size, double positive_fraction,
                           Rng& rng);

constexpr double kRpnBatch = 256.0;
constexpr double kRoiBatch = 512.0;

/// (1/n_cls) sum BCE(p, p_hat) + (1/n_reg) sum p * smoothL1(t, t_hat).
/// `logits` is [n] (or [n x 1]); `deltas` is [n x 4]. Throws on an empty sample.
Tensor rpn_loss(const Tensor& logits, const Tensor& deltas, std::span<const float> labels,
                std::span<const float> targets, double n_cls = kRpnBatch,
                double n_reg = kRpnBatch);

struct ProposalConfig {
  int pre_nms_top_n = 2000;
  double nms_iou = 0.7;
  int post_nms_top_n = 300;
  double min_size = 1.0;
};

struct ProposalBatch {
  std::vector<Box> boxes;
  std::vector<float> scores;
  std::vector<int> anchor_index;
};

/// Axis-aligned greedy NMS; suppresses IoU > threshold. Input order is the
/// priority order. Returns kept positions.
std::vector<int> box_nms(std::span<const Box> boxes, double threshold);

/// Decodes anchors with deltas, clips to the image, drops boxes under min_size,
/// runs NMS and keeps the top post_nms_top_n by descending score.
ProposalBatch select_proposals(const AnchorSet& anchors, std::span<const float> scores,
                               std::span<const float> deltas, double image_w, double image_h,
                               const ProposalConfig& cfg = {});

/// Bilinear crop-resize of an image-pixel box on a feature map of the given
/// stride. Returns [size x size x D]. Throws on a zero-area box.
Tensor roi_pool(const Tensor& fmap, const Box& box, int stride, int size = 7);
/// Batched form; returns [R x size*size*D].
Tensor roi_pool_batch(const Tensor& fmap, std::span<const Box> boxes, int stride, int size);

struct LabeledGrasp {
  OrientedRect rect;
  std::string category;
};

struct RoiAssignConfig {
  double foreground_iou = 0.5;
  int batch_size = 512;
  double positive_fraction = 0.25;
};

struct RoiMatch {
  int label = 0;      // 0..18
  int grasp = -1;     // index into the grasp list, -1 when background
  Delta delta{};      // zero for background
};

/// Unsampled assignment: a proposal whose best IoU with a grasp of the queried
/// category is >= foreground_iou takes that grasp's orientation label; all
/// other proposals, including those on other objects' grasps, are class 0.
std::vector<RoiMatch> match_roi_targets(std::span<const Box> proposals,
                                        std::span<const LabeledGrasp> grasps,
                                        const std::string& queried, double foreground_iou);

struct RoiTargets {
  std::vector<int> proposal_index;
  std::vector<int> labels;
  std::vector<float> deltas;  // 4 per sample
  std::vector<char> positive;
};

RoiTargets assign_roi_targets(std::span<const Box> proposals, std::span<const LabeledGrasp> grasps,
                              const std::string& queried, const RoiAssignConfig& cfg, Rng& rng);

/// (1/n_cls) sum CE(c, c_hat) + (1/n_reg) sum 1(c != 0) smoothL1(t, g_hat[0:3]).
Tensor roi_loss(const Tensor& class_logits, const Tensor& deltas, std::span<const int> labels,
                std::span<const float> targets, double n_cls = kRoiBatch,
                double n_reg = kRoiBatch);

/// L = L_gp + L_gd.
Tensor joint_loss(const Tensor& proposal_loss, const Tensor& detection_loss);

struct GraspPrediction {
  OrientedRect rect;
  int label = 0;
  float score = 0.0f;
};

struct DecodeConfig {
  double nms_iou = 0.3;
  double image_w = 0.0;  // clip bounds; 0 disables clipping
  double image_h = 0.0;
};

/// Drops class-0 rows, maps argmax class to theta = 10 * class, applies deltas
/// to proposals, runs rotated NMS and returns the top k by class probability.
/// `class_logits` is row-major [n x 19], `deltas` [n x 4].
std::vector<GraspPrediction> decode_grasps(std::span<const float> class_logits,
                                           std::span<const float> deltas,
                                           std::span<const Box> proposals, int k,
                                           const DecodeConfig& cfg = {});

}  // namespace sketchgrasp
