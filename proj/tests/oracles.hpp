#pragma once

// Independent reference computations used by the unit tests and the
// acceptance runner. Nothing here calls into the code it checks, except for
// building inputs.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sketchgrasp/detection.hpp"
#include "sketchgrasp/geometry.hpp"
#include "sketchgrasp/ops.hpp"
#include "sketchgrasp/rng.hpp"

namespace oracle {

using sketchgrasp::OrientedRect;
using sketchgrasp::Shape;
using sketchgrasp::Tensor;

using Values = std::vector<double>;

// ---------------------------------------------------------------------------
// Gradient checks

/// f32 op under test and its f64 reference on the same flattened inputs.
struct PrimitiveCase {
  std::string name;
  std::vector<Shape> shapes;
  std::vector<Values> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> op;
  std::function<Values(const std::vector<Values>&)> reference;
};

struct PrimitiveReport {
  std::string name;
  double forward_error = 0.0;  // max |f32 - f64| / max(1, |f64|)
  double grad_error = 0.0;     // ||analytic - numeric|| / ||numeric||
};

/// Projects the output on fixed random weights, backpropagates the f32 op and
/// compares against central differences (h = 1e-3) of the f64 reference.
PrimitiveReport check_primitive(const PrimitiveCase& c, std::uint64_t seed, double step = 1e-3);

/// One case per differentiable primitive, with inputs kept away from relu and
/// max switching points.
std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed);

/// Random 5-layer composite (linear, relu, conv, max-pool, concat) and its f64
/// mirror.
PrimitiveCase composite_case(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Geometry

/// area(a & b) / area(a | b) by sampling cell centers of a grid x grid raster
/// over the union's bounding box.
double raster_jaccard(const OrientedRect& a, const OrientedRect& b, int grid = 1024);
bool inside_rect(const OrientedRect& r, double px, double py);

/// Minimum over explicit 180-degree shifts.
double brute_angle_error(double a, double b);
/// Direct scan of every ground truth, with rotated IoU from `jaccard`.
bool brute_is_correct(const OrientedRect& pred, std::span<const OrientedRect> gts,
                      const std::function<double(const OrientedRect&, const OrientedRect&)>& jaccard);

OrientedRect random_rect(sketchgrasp::Rng& rng, double extent = 100.0);

// ---------------------------------------------------------------------------
// Losses (scalar recomputation of the detection losses)

double bce_with_logit(double logit, double target);
double smooth_l1(double d, double beta = 1.0);

double rpn_loss(std::span<const float> logits, std::span<const float> deltas,
                std::span<const float> labels, std::span<const float> targets, double n_cls,
                double n_reg);
double roi_loss(std::span<const float> logits, std::span<const float> deltas,
                std::span<const int> labels, std::span<const float> targets, double n_cls,
                double n_reg);

// ---------------------------------------------------------------------------
// Retrieval metrics

struct ScoredQuery {
  std::vector<bool> correct;  // per ranked prediction
};

/// P@k and R@k straight from the definitions.
std::pair<double, double> precision_recall(const std::vector<ScoredQuery>& queries, int k);

// ---------------------------------------------------------------------------
// Bilinear feature sampling

/// Value of `fmap` [h x w x d] at a continuous position in cell units, with cell
/// centers at integer + 0.5 and clamping beyond the outer centers.
double bilinear_sample(const Values& fmap, int h, int w, int d, double y, double x, int channel);

}  // namespace oracle
