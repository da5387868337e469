#pragma once

#include <array>
#include <span>
#include <vector>

#include "sketchgrasp/layers.hpp"
#include "sketchgrasp/sketch_graph.hpp"

namespace sketchgrasp {

constexpr int kEdgeConvBlocks = 4;
constexpr int kEdgeConvWidth = 128;

/// Two-layer perceptron applied to (x_i, x_j - x_i) pair features.
struct EdgeMlp {
  Dense first;   // 2 * 128 -> 128
  Dense second;  // 128 -> 128
};

struct SketchEncoderParams {
  Dense input;  // 2 -> 128
  std::array<EdgeMlp, kEdgeConvBlocks> blocks;
  Dense point_proj;  // 4 * 128 -> D
  bool dynamic_knn = false;
  int knn_k = 8;
};

SketchEncoderParams make_sketch_encoder(int feature_dim, Rng& rng);
void collect(NamedTensors& out, const std::string& name, const SketchEncoderParams& p);

/// out[i] = max over out-neighbors j of MLP(concat(x_i, x_j - x_i)); a vertex
/// without neighbors uses the self pair (x_i, 0). Throws std::out_of_range on
/// bad indices.
Tensor edgeconv_forward(const Tensor& features, std::span<const Edge> edges, const EdgeMlp& block);

/// Residual EdgeConv stack over the graph, concatenated per point, projected
/// to D and max-pooled over points. Returns [1 x 1 x D].
Tensor sketch_encode(const SketchGraph& graph, const SketchEncoderParams& params);

/// k nearest neighbors of every row in feature space (excluding the row itself).
std::vector<Edge> knn_edges(const Tensor& features, int k);

struct ImageEncoderParams {
  std::vector<Conv> blocks;   // 3x3 stride-2 conv + relu each
  std::vector<Conv> context;  // 3x3 stride-1 residual convs at the output resolution
  Conv head;                  // 1x1 conv to D
  int stride() const { return 1 << blocks.size(); }
};

/// `widths` gives the output channels of each stride-2 block; `context_convs`
/// residual 3x3 convs then widen the receptive field without downsampling.
ImageEncoderParams make_image_encoder(int in_channels, std::span<const int> widths,
                                      int feature_dim, Rng& rng, int context_convs = 0);
void collect(NamedTensors& out, const std::string& name, const ImageEncoderParams& p);

/// [H' x W' x C] -> [H'/s x W'/s x D]. Throws std::invalid_argument when the
/// input is not divisible by the stride, naming the padded size to use.
Tensor image_encode(const Tensor& image, const ImageEncoderParams& params);

/// Sketch raster [H' x W' x 1] -> CNN -> global max-pool -> [1 x 1 x D].
Tensor sketch_encode_image_baseline(const Tensor& raster, const ImageEncoderParams& params);

/// Draws the graph's edges as 1-pixel lines on a size x size single-channel canvas.
Tensor rasterize_sketch(const SketchGraph& graph, int size);

}  // namespace sketchgrasp
