#include "sketchgrasp/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sketchgrasp {

namespace {

const double kMaxLogScale = std::log(1000.0 / 16.0);

}  // namespace

int theta_to_label(double theta_deg) {
  const double t = normalize_theta(theta_deg);
  const int label = static_cast<int>(std::floor(t / kBinDegrees + 0.5));
  return label == 0 ? kOrientationBins : label;
}

double label_to_theta(int label) {
  if (label < 1 || label > kOrientationBins) {
    throw std::out_of_range("label_to_theta: label " + std::to_string(label) + " outside 1..18");
  }
  return kBinDegrees * label;
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Box clip_box(const Box& b, double image_w, double image_h) {
  const double x0 = std::clamp(b.x0(), 0.0, image_w);
  const double x1 = std::clamp(b.x1(), 0.0, image_w);
  const double y0 = std::clamp(b.y0(), 0.0, image_h);
  const double y1 = std::clamp(b.y1(), 0.0, image_h);
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

Delta encode_delta(const Box& anchor, const Box& target) {
  return {static_cast<float>((target.x - anchor.x) / anchor.w),
          static_cast<float>((target.y - anchor.y) / anchor.h),
          static_cast<float>(std::log(target.w / anchor.w)),
          static_cast<float>(std::log(target.h / anchor.h))};
}

Box apply_delta(const Box& anchor, const Delta& d) {
  const double dw = std::min<double>(d[2], kMaxLogScale);
  const double dh = std::min<double>(d[3], kMaxLogScale);
  return {anchor.x + d[0] * anchor.w, anchor.y + d[1] * anchor.h, anchor.w * std::exp(dw),
          anchor.h * std::exp(dh)};
}

Box grasp_box(const OrientedRect& g) { return {g.x, g.y, g.w, g.h}; }

Box grasp_hull(const OrientedRect& g) {
  const auto corners = rect_corners(g);
  double x0 = corners[0].x, x1 = x0, y0 = corners[0].y, y1 = y0;
  for (const Point2& p : corners) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

AnchorSet gen_anchors(int rows, int cols, int stride, std::span<const double> scales,
                      std::span<const double> ratios) {
  if (rows <= 0 || cols <= 0 || stride <= 0) {
    throw std::invalid_argument("gen_anchors: dimensions and stride must be positive");
  }
  AnchorSet set;
  set.rows = rows;
  set.cols = cols;
  set.stride = stride;
  set.per_cell = static_cast<int>(scales.size() * ratios.size());
  set.boxes.reserve(static_cast<std::size_t>(rows) * cols * set.per_cell);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double cx = (c + 0.5) * stride;
      const double cy = (r + 0.5) * stride;
      for (double s : scales) {
        for (double ratio : ratios) {
          const double root = std::sqrt(ratio);
          set.boxes.push_back({cx, cy, s / root, s * root});
        }
      }
    }
  }
  return set;
}

RpnTargets assign_rpn_targets(const AnchorSet& anchors, std::span<const OrientedRect> queried,
                              const RpnAssignConfig& cfg) {
  const std::size_t n = anchors.boxes.size();
  RpnTargets t;
  t.labels.assign(n, 0);
  t.deltas.assign(n, Delta{});
  t.max_iou.assign(n, 0.0);
  if (queried.empty()) return t;

  std::vector<Box> gt;
  for (const auto& g : queried) gt.push_back(cfg.use_hull ? grasp_hull(g) : grasp_box(g));
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best(gt.size(), 0.0);
  std::vector<double> iou(n * gt.size());
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = box_iou(anchors.boxes[a], gt[g]);
      iou[a * gt.size() + g] = v;
      if (best_gt[a] < 0 || v > t.max_iou[a]) {
        t.max_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      gt_best[g] = std::max(gt_best[g], v);
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    int label = -1;
    if (t.max_iou[a] < cfg.negative_iou) label = 0;
    if (t.max_iou[a] >= cfg.positive_iou) label = 1;
    // Ties within rounding count: symmetric anchors reach the same IoU through
    // different arithmetic.
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_best[g] > 0.0 && iou[a * gt.size() + g] >= gt_best[g] - 1e-9) label = 1;
    }
    t.labels[a] = label;
    if (label == 1) t.deltas[a] = encode_delta(anchors.boxes[a], gt[best_gt[a]]);
  }
  return t;
}

RpnSample sample_rpn_batch(const RpnTargets& targets, int batch_size, double positive_fraction,
                           Rng& rng) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < targets.labels.size(); ++i) {
    if (targets.labels[i] == 1) pos.push_back(static_cast<int>(i));
    if (targets.labels[i] == 0) neg.push_back(static_cast<int>(i));
  }
  rng.shuffle(pos);
  rng.shuffle(neg);
  const int max_pos = static_cast<int>(std::floor(batch_size * positive_fraction));
  pos.resize(std::min<std::size_t>(pos.size(), max_pos));
  neg.resize(std::min<std::size_t>(neg.size(), batch_size - pos.size()));
  RpnSample s;
  for (int i : pos) {
    s.anchor_index.push_back(i);
    s.labels.push_back(1.0f);
    s.targets.insert(s.targets.end(), targets.deltas[i].begin(), targets.deltas[i].end());
  }
  for (int i : neg) {
    s.anchor_index.push_back(i);
    s.labels.push_back(0.0f);
    s.targets.insert(s.targets.end(), 4, 0.0f);
  }
  return s;
}

Tensor rpn_loss(const Tensor& logits, const Tensor& deltas, std::span<const float> labels,
                std::span<const float> targets, double n_cls, double n_reg) {
  if (labels.empty()) throw std::invalid_argument("rpn_loss: empty anchor sample");
  const Tensor cls = binary_cross_entropy(logits, labels);
  const Tensor reg = smooth_l1(deltas, targets, labels);
  return add(scale(cls, static_cast<float>(1.0 / n_cls)), scale(reg, static_cast<float>(1.0 / n_reg)));
}

std::vector<int> box_nms(std::span<const Box> boxes, double threshold) {
  std::vector<int> kept;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    bool suppressed = false;
    for (int k : kept) {
      if (box_iou(boxes[i], boxes[k]) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(static_cast<int>(i));
  }
  return kept;
}

ProposalBatch select_proposals(const AnchorSet& anchors, std::span<const float> scores,
                               std::span<const float> deltas, double image_w, double image_h,
                               const ProposalConfig& cfg) {
  const std::size_t n = anchors.boxes.size();
  if (scores.size() != n || deltas.size() != 4 * n) {
    throw std::invalid_argument("select_proposals: expected " + std::to_string(n) +
                                " scores and " + std::to_string(4 * n) + " deltas");
  }
  std::vector<Box> decoded(n);
  std::vector<int> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const Delta d{deltas[4 * i], deltas[4 * i + 1], deltas[4 * i + 2], deltas[4 * i + 3]};
    decoded[i] = clip_box(apply_delta(anchors.boxes[i], d), image_w, image_h);
    if (decoded[i].w >= cfg.min_size && decoded[i].h >= cfg.min_size) {
      candidates.push_back(static_cast<int>(i));
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  if (static_cast<int>(candidates.size()) > cfg.pre_nms_top_n) candidates.resize(cfg.pre_nms_top_n);
  std::vector<Box> ordered;
  for (int i : candidates) ordered.push_back(decoded[i]);
  const std::vector<int> kept = box_nms(ordered, cfg.nms_iou);
  ProposalBatch out;
  for (int k : kept) {
    if (static_cast<int>(out.boxes.size()) >= cfg.post_nms_top_n) break;
    out.boxes.push_back(ordered[k]);
    out.scores.push_back(scores[candidates[k]]);
    out.anchor_index.push_back(candidates[k]);
  }
  return out;
}

namespace {

FeatureBox to_feature(const Box& b, int stride) {
  return {b.x0() / stride, b.y0() / stride, b.x1() / stride, b.y1() / stride};
}

}  // namespace

Tensor roi_pool(const Tensor& fmap, const Box& box, int stride, int size) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw std::invalid_argument("roi_pool: zero-area box");
  const FeatureBox fb = to_feature(box, stride);
  const Tensor pooled = roi_align(fmap, std::span<const FeatureBox>(&fb, 1), size);
  return reshape(pooled, {size, size, fmap.dim(2)});
}

Tensor roi_pool_batch(const Tensor& fmap, std::span<const Box> boxes, int stride, int size) {
  std::vector<FeatureBox> fbs;
  fbs.reserve(boxes.size());
  for (const Box& b : boxes) {
    if (!(b.w > 0.0) || !(b.h > 0.0)) throw std::invalid_argument("roi_pool: zero-area box");
    fbs.push_back(to_feature(b, stride));
  }
  const Tensor pooled = roi_align(fmap, fbs, size);
  return reshape(pooled, {static_cast<int>(boxes.size()), size * size * fmap.dim(2)});
}

std::vector<RoiMatch> match_roi_targets(std::span<const Box> proposals,
                                        std::span<const LabeledGrasp> grasps,
                                        const std::string& queried, double foreground_iou) {
  std::vector<RoiMatch> out(proposals.size());
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    double best = -1.0;
    int best_g = -1;
    for (std::size_t g = 0; g < grasps.size(); ++g) {
      if (grasps[g].category != queried) continue;
      const double v = box_iou(proposals[p], grasp_box(grasps[g].rect));
      if (v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best >= foreground_iou) {
      const OrientedRect& r = grasps[best_g].rect;
      out[p] = {theta_to_label(r.theta), best_g, encode_delta(proposals[p], grasp_box(r))};
    }
  }
  return out;
}

RoiTargets assign_roi_targets(std::span<const Box> proposals, std::span<const LabeledGrasp> grasps,
                              const std::string& queried, const RoiAssignConfig& cfg, Rng& rng) {
  const std::vector<RoiMatch> matches =
      match_roi_targets(proposals, grasps, queried, cfg.foreground_iou);
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    (matches[i].label > 0 ? pos : neg).push_back(static_cast<int>(i));
  }
  rng.shuffle(pos);
  rng.shuffle(neg);
  const int max_pos = static_cast<int>(std::floor(cfg.batch_size * cfg.positive_fraction));
  pos.resize(std::min<std::size_t>(pos.size(), max_pos));
  neg.resize(std::min<std::size_t>(neg.size(), cfg.batch_size - pos.size()));
  RoiTargets t;
  auto push = [&](int i, bool positive) {
    t.proposal_index.push_back(i);
    t.labels.push_back(matches[i].label);
    t.deltas.insert(t.deltas.end(), matches[i].delta.begin(), matches[i].delta.end());
    t.positive.push_back(positive ? 1 : 0);
  };
  for (int i : pos) push(i, true);
  for (int i : neg) push(i, false);
  return t;
}

Tensor roi_loss(const Tensor& class_logits, const Tensor& deltas, std::span<const int> labels,
                std::span<const float> targets, double n_cls, double n_reg) {
  if (labels.empty()) throw std::invalid_argument("roi_loss: empty proposal sample");
  std::vector<float> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] != 0 ? 1.0f : 0.0f;
  const Tensor cls = softmax_cross_entropy(class_logits, labels);
  const Tensor reg = smooth_l1(deltas, targets, mask);
  return add(scale(cls, static_cast<float>(1.0 / n_cls)), scale(reg, static_cast<float>(1.0 / n_reg)));
}

Tensor joint_loss(const Tensor& proposal_loss, const Tensor& detection_loss) {
  return add(proposal_loss, detection_loss);
}

std::vector<GraspPrediction> decode_grasps(std::span<const float> class_logits,
                                           std::span<const float> deltas,
                                           std::span<const Box> proposals, int k,
                                           const DecodeConfig& cfg) {
  if (k <= 0) throw std::invalid_argument("decode_grasps: k must be positive");
  const std::size_t n = proposals.size();
  if (class_logits.size() != n * kNumGraspClasses || deltas.size() != 4 * n) {
    throw std::invalid_argument("decode_grasps: logits/deltas do not match proposal count");
  }
  std::vector<GraspPrediction> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = class_logits.data() + i * kNumGraspClasses;
    const int best = static_cast<int>(std::max_element(row, row + kNumGraspClasses) - row);
    if (best == 0) continue;
    double denom = 0.0;
    for (int c = 0; c < kNumGraspClasses; ++c) denom += std::exp(double(row[c]) - row[best]);
    const Delta d{deltas[4 * i], deltas[4 * i + 1], deltas[4 * i + 2], deltas[4 * i + 3]};
    Box b = apply_delta(proposals[i], d);
    if (cfg.image_w > 0.0 && cfg.image_h > 0.0) b = clip_box(b, cfg.image_w, cfg.image_h);
    if (!(b.w > 0.0) || !(b.h > 0.0)) continue;
    candidates.push_back(
        {OrientedRect(b.x, b.y, b.w, b.h, label_to_theta(best)), best, static_cast<float>(1.0 / denom)});
  }
  std::vector<OrientedRect> rects;
  std::vector<float> scores;
  for (const auto& c : candidates) {
    rects.push_back(c.rect);
    scores.push_back(c.score);
  }
  const std::vector<int> kept = rotated_nms(rects, scores, cfg.nms_iou);
  std::vector<GraspPrediction> out;
  for (int idx : kept) {
    if (static_cast<int>(out.size()) >= k) break;
    out.push_back(candidates[idx]);
  }
  return out;
}

}  // namespace sketchgrasp
