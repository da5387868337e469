#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sketchgrasp/detection.hpp"

using namespace sketchgrasp;

namespace {

// Axis-aligned IoU written out independently of box_iou.
double iou_oracle(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w / 2, b.x + b.w / 2) - std::max(a.x - a.w / 2, b.x - b.w / 2));
  const double iy = std::max(0.0, std::min(a.y + a.h / 2, b.y + b.h / 2) - std::max(a.y - a.h / 2, b.y - b.h / 2));
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

Box random_box(Rng& rng, double extent = 128.0) {
  return {rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(4, 60), rng.uniform(4, 60)};
}

std::vector<float> random_values(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("orientation bins") {
  CHECK(theta_to_label(10.0) == 1);
  CHECK(theta_to_label(180.0) == 18);
  CHECK(theta_to_label(0.0) == 18);
  CHECK(theta_to_label(94.0) == 9);
  CHECK(theta_to_label(95.0) == 10);  // tie goes up
  CHECK(theta_to_label(-10.0) == 17);
  CHECK(theta_to_label(370.0) == 1);
  for (int label = 1; label <= kOrientationBins; ++label) {
    const double t = label_to_theta(label);
    CHECK(t > 0.0);
    CHECK(t <= 180.0);
    CHECK(theta_to_label(t) == label);
  }
  CHECK_THROWS_AS(label_to_theta(0), std::out_of_range);
  CHECK_THROWS_AS(label_to_theta(19), std::out_of_range);
}

TEST_CASE("box deltas round trip") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Box anchor = random_box(rng), target = random_box(rng);
    const Box back = apply_delta(anchor, encode_delta(anchor, target));
    CHECK(back.x == doctest::Approx(target.x).epsilon(1e-4));
    CHECK(back.y == doctest::Approx(target.y).epsilon(1e-4));
    CHECK(back.w == doctest::Approx(target.w).epsilon(1e-4));
    CHECK(back.h == doctest::Approx(target.h).epsilon(1e-4));
  }
}

TEST_CASE("anchor generation") {
  const AnchorSet a = gen_anchors(2, 2, 16, kDefaultAnchorScales, kDefaultAnchorRatios);
  CHECK(a.boxes.size() == 36);
  CHECK(a.per_cell == 9);
  for (int k = 0; k < a.per_cell; ++k) {
    CHECK(a.boxes[k].x == 8.0);
    CHECK(a.boxes[k].y == 8.0);
  }
  const std::vector<double> scale{32.0}, ratio{1.0};
  const AnchorSet square = gen_anchors(1, 1, 16, scale, ratio);
  CHECK(square.boxes[0] == Box{8.0, 8.0, 32.0, 32.0});
  // Cell (1, 0) is one stride down.
  CHECK(a.boxes[2 * 9].y == 24.0);
  CHECK(a.boxes[2 * 9].x == 8.0);
}

TEST_CASE("rpn targets on an exact match and on an absent query") {
  const std::vector<double> scale{32.0}, ratio{1.0};
  const AnchorSet a = gen_anchors(2, 2, 16, scale, ratio);
  const std::vector<OrientedRect> grasp{OrientedRect(8, 8, 32, 32, 90)};
  const RpnTargets t = assign_rpn_targets(a, grasp);
  CHECK(t.labels[0] == 1);
  CHECK(t.deltas[0] == Delta{0, 0, 0, 0});

  const RpnTargets none = assign_rpn_targets(a, {});
  for (int l : none.labels) CHECK(l == 0);
}

TEST_CASE("rpn targets match a brute-force IoU matrix") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const AnchorSet a = gen_anchors(4, 4, 16, kDefaultAnchorScales, kDefaultAnchorRatios);
    std::vector<OrientedRect> gts;
    const int count = rng.uniform_int(1, 4);
    for (int g = 0; g < count; ++g) {
      const Box b = random_box(rng, 64.0);
      gts.push_back(OrientedRect(b.x, b.y, b.w, b.h, rng.uniform(0, 180)));
    }
    const RpnTargets t = assign_rpn_targets(a, gts);
    std::vector<double> best_for_gt(gts.size(), 0.0);
    for (const Box& anchor : a.boxes)
      for (std::size_t g = 0; g < gts.size(); ++g)
        best_for_gt[g] = std::max(best_for_gt[g], iou_oracle(anchor, grasp_box(gts[g])));
    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
      double best = 0.0;
      bool argmax = false;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const double v = iou_oracle(a.boxes[i], grasp_box(gts[g]));
        best = std::max(best, v);
        argmax = argmax || (best_for_gt[g] > 0.0 && std::abs(v - best_for_gt[g]) < 1e-9);
      }
      int expected = -1;
      if (best < 0.3) expected = 0;
      if (best >= 0.7 || argmax) expected = 1;
      CHECK(t.labels[i] == expected);
      CHECK(t.max_iou[i] == doctest::Approx(best));
    }
  }
}

TEST_CASE("rpn sampling respects batch size and positive cap") {
  Rng rng(3);
  RpnTargets t;
  for (int i = 0; i < 400; ++i) {
    t.labels.push_back(i < 200 ? 1 : (i < 380 ? 0 : -1));
    t.deltas.push_back({0.1f, 0, 0, 0});
  }
  const RpnSample s = sample_rpn_batch(t, 256, 0.5, rng);
  CHECK(s.anchor_index.size() == 256);
  CHECK(std::count(s.labels.begin(), s.labels.end(), 1.0f) == 128);
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    if (s.labels[i] == 0.0f) CHECK(s.targets[4 * i] == 0.0f);
    CHECK(t.labels[s.anchor_index[i]] != -1);
  }
}

TEST_CASE("rpn loss special cases") {
  const std::vector<float> labels{1, 0, 1};
  const std::vector<float> targets{0.1f, -0.2f, 0.3f, 0.0f, 0, 0, 0, 0, -0.5f, 0.2f, 0.1f, 0.4f};
  // Saturated, correct logits and exact deltas.
  const Tensor logits = Tensor::from_data({3, 1}, {40.0f, -40.0f, 40.0f});
  const Tensor deltas = Tensor::from_data({3, 4}, targets);
  CHECK(rpn_loss(logits, deltas, labels, targets).item() == doctest::Approx(0.0).epsilon(1e-12));

  // All negatives: the regression term vanishes whatever the deltas.
  const std::vector<float> negatives{0, 0, 0};
  Rng rng(4);
  const Tensor noisy = Tensor::from_data({3, 4}, random_values(12, rng));
  const Tensor z = Tensor::from_data({3}, {0.3f, -0.1f, 0.7f});
  const double with = rpn_loss(z, noisy, negatives, targets).item();
  const double without = rpn_loss(z, deltas, negatives, targets).item();
  CHECK(with == without);

  CHECK_THROWS(rpn_loss(Tensor::zeros({0}), Tensor::zeros({0, 4}), {}, {}));
}

TEST_CASE("rpn and roi losses match scalar recomputation") {
  Rng rng(5);
  for (int batch = 0; batch < 100; ++batch) {
    const int n = rng.uniform_int(1, 64);
    std::vector<float> labels(n);
    for (auto& l : labels) l = rng.bernoulli(0.3) ? 1.0f : 0.0f;
    const auto logits = random_values(n, rng, -4, 4);
    const auto deltas = random_values(4 * n, rng, -2, 2);
    const auto targets = random_values(4 * n, rng, -2, 2);
    const double got = rpn_loss(Tensor::from_data({n, 1}, logits), Tensor::from_data({n, 4}, deltas),
                                labels, targets).item();
    const double want = oracle::rpn_loss(logits, deltas, labels, targets, kRpnBatch, kRpnBatch);
    CHECK(got == doctest::Approx(want).epsilon(1e-5));

    std::vector<int> classes(n);
    for (auto& c : classes) c = rng.bernoulli(0.4) ? rng.uniform_int(1, 18) : 0;
    const auto class_logits = random_values(19 * n, rng, -4, 4);
    const double got_roi = roi_loss(Tensor::from_data({n, 19}, class_logits),
                                    Tensor::from_data({n, 4}, deltas), classes, targets).item();
    const double want_roi = oracle::roi_loss(class_logits, deltas, classes, targets, kRoiBatch, kRoiBatch);
    CHECK(got_roi == doctest::Approx(want_roi).epsilon(1e-5));
  }
}

TEST_CASE("roi loss special cases") {
  const std::vector<int> background{0, 0};
  const std::vector<float> targets(8, 0.0f);
  Rng rng(6);
  const Tensor logits = Tensor::from_data({2, 19}, random_values(38, rng));
  const double a = roi_loss(logits, Tensor::from_data({2, 4}, random_values(8, rng)), background, targets).item();
  const double b = roi_loss(logits, Tensor::zeros({2, 4}), background, targets).item();
  CHECK(a == b);

  std::vector<float> confident(2 * 19, -30.0f);
  confident[0 * 19 + 4] = 30.0f;
  confident[1 * 19 + 0] = 30.0f;
  const std::vector<int> labels{4, 0};
  const std::vector<float> t{0.2f, -0.1f, 0.05f, 0.3f, 0, 0, 0, 0};
  CHECK(roi_loss(Tensor::from_data({2, 19}, confident), Tensor::from_data({2, 4}, t), labels, t).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("joint loss is the sum") {
  const Tensor a = Tensor::from_data({1}, {0.5f}), b = Tensor::from_data({1}, {0.25f});
  CHECK(joint_loss(a, b).item() == 0.75f);
  CHECK(joint_loss(b, a).item() == joint_loss(a, b).item());
  CHECK(joint_loss(Tensor::zeros({1}), Tensor::zeros({1})).item() == 0.0f);
}

TEST_CASE("proposal selection") {
  const std::vector<double> scale{32.0}, ratio{1.0};
  const AnchorSet a = gen_anchors(2, 2, 32, scale, ratio);
  const std::vector<float> zeros(16, 0.0f);
  ProposalConfig top1{2000, 0.7, 1, 1.0};
  const ProposalBatch one = select_proposals(a, std::vector<float>{0.1f, 0.9f, 0.2f, 0.3f}, zeros, 64, 64, top1);
  REQUIRE(one.boxes.size() == 1);
  CHECK(one.anchor_index[0] == 1);

  AnchorSet twin;
  twin.boxes = {{20, 20, 10, 10}, {20, 20, 10, 10}};
  const ProposalBatch dedup = select_proposals(twin, std::vector<float>{0.5f, 0.6f}, std::vector<float>(8, 0.0f), 64, 64);
  CHECK(dedup.boxes.size() == 1);
  CHECK(dedup.anchor_index[0] == 1);
}

TEST_CASE("random proposals: descending, clipped, and pairwise IoU at most 0.7") {
  Rng rng(7);
  const AnchorSet a = gen_anchors(8, 8, 16, kDefaultAnchorScales, kDefaultAnchorRatios);
  const auto scores = random_values(a.boxes.size(), rng, 0, 1);
  const auto deltas = random_values(4 * a.boxes.size(), rng, -0.3, 0.3);
  const ProposalBatch p = select_proposals(a, scores, deltas, 128, 128);
  CHECK(p.boxes.size() <= 300);
  for (std::size_t i = 0; i < p.boxes.size(); ++i) {
    if (i > 0) CHECK(p.scores[i] <= p.scores[i - 1]);
    CHECK(p.scores[i] == scores[p.anchor_index[i]]);
    CHECK(p.boxes[i].x0() >= 0.0);
    CHECK(p.boxes[i].x1() <= 128.0 + 1e-9);
    for (std::size_t j = 0; j < i; ++j) CHECK(iou_oracle(p.boxes[i], p.boxes[j]) <= 0.7 + 1e-12);
  }
}

TEST_CASE("roi pooling") {
  Rng rng(8);
  const auto values = random_values(4 * 5 * 3, rng);
  const Tensor fmap = Tensor::from_data({4, 5, 3}, values);

  // A one-cell map pools to that cell wherever the box lands.
  const Tensor single = Tensor::from_data({1, 1, 3}, {0.5f, -1.0f, 2.0f});
  const Tensor cell = roi_pool(single, Box{30, 20, 25, 9}, 16, 7);
  CHECK(cell.shape() == Shape{7, 7, 3});
  for (int i = 0; i < 49; ++i)
    for (int c = 0; c < 3; ++c) CHECK(cell.data()[i * 3 + c] == single.data()[c]);

  const Tensor whole = roi_pool(fmap, Box{2.5, 2.0, 5.0, 4.0}, 1, 4);
  CHECK(whole.shape() == Shape{4, 4, 3});
  const Tensor square = Tensor::from_data({4, 4, 3}, std::vector<float>(values.begin(), values.begin() + 48));
  const Tensor identity = roi_pool(square, Box{2, 2, 4, 4}, 1, 4);
  for (std::size_t i = 0; i < 48; ++i) CHECK(identity.data()[i] == doctest::Approx(square.data()[i]));

  const std::vector<double> f64(values.begin(), values.end());
  for (int trial = 0; trial < 20; ++trial) {
    const double x0 = rng.uniform(0, 60), y0 = rng.uniform(0, 50);
    const Box b{x0 + 5, y0 + 4, rng.uniform(2, 20), rng.uniform(2, 14)};
    const Tensor r = roi_pool(fmap, b, 16, 3);
    for (int py = 0; py < 3; ++py)
      for (int px = 0; px < 3; ++px)
        for (int c = 0; c < 3; ++c) {
          const double y = (b.y0() + (py + 0.5) * b.h / 3) / 16, x = (b.x0() + (px + 0.5) * b.w / 3) / 16;
          CHECK(r.data()[(py * 3 + px) * 3 + c] ==
                doctest::Approx(oracle::bilinear_sample(f64, 4, 5, 3, y, x, c)).epsilon(1e-5));
        }
  }
  CHECK_THROWS_AS(roi_pool(fmap, Box{10, 10, 0, 5}, 16, 7), std::invalid_argument);
}

TEST_CASE("roi targets follow the queried category") {
  const std::vector<LabeledGrasp> grasps{{OrientedRect(30, 30, 20, 10, 90), "cup"},
                                         {OrientedRect(80, 80, 20, 10, 40), "knife"}};
  const std::vector<Box> proposals{{30, 30, 20, 10}, {80, 80, 20, 10}, {5, 120, 8, 8}};
  const auto cup = match_roi_targets(proposals, grasps, "cup", 0.5);
  CHECK(cup[0].label == 9);
  CHECK(cup[0].delta == Delta{0, 0, 0, 0});
  CHECK(cup[1].label == 0);  // high IoU, wrong object
  CHECK(cup[2].label == 0);

  // Swapping the query flips exactly the proposals on the other object's grasps.
  const auto knife = match_roi_targets(proposals, grasps, "knife", 0.5);
  CHECK(knife[0].label == 0);
  CHECK(knife[1].label == 4);
  CHECK(knife[2].label == 0);
}

TEST_CASE("roi targets match brute-force best matching") {
  Rng rng(9);
  const std::vector<std::string> cats{"a", "b", "c"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LabeledGrasp> grasps;
    for (int g = 0; g < 6; ++g) {
      const Box b = random_box(rng, 64);
      grasps.push_back({OrientedRect(b.x, b.y, b.w, b.h, rng.uniform(0, 180)), cats[g % 3]});
    }
    std::vector<Box> proposals;
    for (int p = 0; p < 40; ++p) {
      const Box g = grasp_box(grasps[rng.uniform_int(0, 5)].rect);
      proposals.push_back({g.x + rng.uniform(-4, 4), g.y + rng.uniform(-4, 4), g.w * rng.uniform(0.8, 1.2),
                           g.h * rng.uniform(0.8, 1.2)});
    }
    const auto matches = match_roi_targets(proposals, grasps, "b", 0.5);
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      double best = 0.0;
      int best_g = -1;
      for (std::size_t g = 0; g < grasps.size(); ++g) {
        if (grasps[g].category != "b") continue;
        const double v = iou_oracle(proposals[p], grasp_box(grasps[g].rect));
        if (v > best) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      const int expected = best >= 0.5 ? theta_to_label(grasps[best_g].rect.theta) : 0;
      CHECK(matches[p].label == expected);
    }

    Rng sample_rng(trial);
    const RoiTargets t = assign_roi_targets(proposals, grasps, "b", {0.5, 16, 0.25}, sample_rng);
    CHECK(t.labels.size() <= 16);
    CHECK(std::count(t.positive.begin(), t.positive.end(), 1) <= 4);
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
      CHECK(t.labels[i] == matches[t.proposal_index[i]].label);
      CHECK((t.labels[i] != 0) == (t.positive[i] == 1));
    }
  }
}

TEST_CASE("decode grasps") {
  const std::vector<Box> proposals{{20, 20, 10, 6}, {60, 60, 10, 6}};
  std::vector<float> background(2 * 19, 0.0f);
  background[0] = background[19] = 5.0f;
  const std::vector<float> deltas(8, 0.0f);
  CHECK(decode_grasps(background, deltas, proposals, 5).empty());

  std::vector<float> one = background;
  one[19 + 9] = 9.0f;
  const auto single = decode_grasps(one, deltas, proposals, 5);
  REQUIRE(single.size() == 1);
  CHECK(single[0].label == 9);
  CHECK(single[0].rect.theta == 90.0);
  CHECK(single[0].rect.x == 60.0);

  CHECK_THROWS_AS(decode_grasps(one, deltas, proposals, 0), std::invalid_argument);
}

TEST_CASE("decoded duplicates are suppressed and top-k is a prefix") {
  Rng rng(10);
  std::vector<Box> proposals;
  std::vector<float> logits, deltas;
  for (int i = 0; i < 60; ++i) {
    const Box base{rng.uniform(20, 40), rng.uniform(20, 40), 16, 8};
    proposals.push_back(base);
    for (int c = 0; c < 19; ++c) logits.push_back(static_cast<float>(rng.uniform(-1, 1)));
    logits[i * 19 + 1 + rng.uniform_int(0, 2)] += 4.0f;
    for (int k = 0; k < 4; ++k) deltas.push_back(static_cast<float>(rng.uniform(-0.05, 0.05)));
  }
  const auto all = decode_grasps(logits, deltas, proposals, 100);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i > 0) CHECK(all[i].score <= all[i - 1].score);
    for (std::size_t j = 0; j < i; ++j) CHECK(rotated_jaccard(all[i].rect, all[j].rect) <= 0.3 + 1e-9);
  }
  for (int k = 1; k <= static_cast<int>(all.size()); ++k) {
    const auto top = decode_grasps(logits, deltas, proposals, k);
    REQUIRE(top.size() == static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) CHECK(top[i].rect == all[i].rect);
  }
}
