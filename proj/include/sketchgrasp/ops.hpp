#pragma once

#include <span>
#include <vector>

#include "sketchgrasp/tensor.hpp"

namespace sketchgrasp {

// Differentiable primitives. Spatial tensors are channel-last: H x W x C.
// Scalar losses accumulate in double and are returned as shape-[1] tensors;
// normalization by batch size is left to the caller.

Tensor matmul(const Tensor& a, const Tensor& b);

/// x [N x in] * w [in x out] + bias [out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Elementwise sum. `b` is either the same shape as `a` or has numel equal to
/// the last dimension of `a` (broadcast over all leading positions).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise (Hadamard) product with the same broadcasting rule as add().
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// x [H x W x Cin], w [kh x kw x Cin x Cout], bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);
Tensor max_pool2d(const Tensor& x, int kernel, int stride);

/// Max along `axis`, keeping that axis with extent 1. Ties route the gradient
/// to the first maximal element.
Tensor reduce_max(const Tensor& x, int axis);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);

/// Rows of a rank-2 tensor selected by index (duplicates allowed).
Tensor gather_rows(const Tensor& x, std::span<const int> rows);
/// out[s] = max over rows r with segment[r] == s of x[r]; empty segments are zero.
Tensor segment_max(const Tensor& x, std::span<const int> segment, int num_segments);

/// Sum over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Sum of binary cross-entropy between sigmoid(logits) and targets in [0,1].
Tensor binary_cross_entropy(const Tensor& logits, std::span<const float> targets);
/// Sum over rows of weight[r] * sum_k smoothL1(pred[r,k] - target[r,k]).
/// Rows with zero weight contribute nothing, including to the gradient.
Tensor smooth_l1(const Tensor& pred, std::span<const float> target,
                 std::span<const float> row_weights, float beta = 1.0f);
/// Unweighted variant: all rows weight 1.
Tensor smooth_l1(const Tensor& pred, std::span<const float> target, float beta = 1.0f);

/// Box on a feature map in cell units; cell (r, c) covers [c, c+1) x [r, r+1).
struct FeatureBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Bilinear crop-resize of each box of `fmap` [H x W x D] to size x size,
/// one sample per bin center, clamped to border cell centers.
/// Returns [R x size x size x D]. Gradients flow to `fmap` only.
Tensor roi_align(const Tensor& fmap, std::span<const FeatureBox> boxes, int size);

}  // namespace sketchgrasp
