#include "sketchgrasp/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sketchgrasp {

SketchEncoderParams make_sketch_encoder(int feature_dim, Rng& rng) {
  SketchEncoderParams p;
  p.input = make_dense(2, kEdgeConvWidth, rng);
  for (auto& block : p.blocks) {
    block.first = make_dense(2 * kEdgeConvWidth, kEdgeConvWidth, rng);
    block.second = make_dense(kEdgeConvWidth, kEdgeConvWidth, rng);
  }
  p.point_proj = make_dense(kEdgeConvBlocks * kEdgeConvWidth, feature_dim, rng);
  return p;
}

void collect(NamedTensors& out, const std::string& name, const SketchEncoderParams& p) {
  collect(out, name + ".input", p.input);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string block = name + ".edgeconv" + std::to_string(i + 1);
    collect(out, block + ".fc1", p.blocks[i].first);
    collect(out, block + ".fc2", p.blocks[i].second);
  }
  collect(out, name + ".point_proj", p.point_proj);
}

Tensor edgeconv_forward(const Tensor& features, std::span<const Edge> edges, const EdgeMlp& block) {
  const int n = features.dim(0);
  std::vector<int> out_degree(n, 0);
  for (const Edge& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
      throw std::out_of_range("edgeconv: edge (" + std::to_string(e.from) + " -> " +
                              std::to_string(e.to) + ") outside " + std::to_string(n) +
                              " vertices");
    }
    ++out_degree[e.from];
  }
  std::vector<int> center;
  std::vector<int> neighbor;
  center.reserve(edges.size() + n);
  neighbor.reserve(edges.size() + n);
  for (const Edge& e : edges) {
    center.push_back(e.from);
    neighbor.push_back(e.to);
  }
  for (int i = 0; i < n; ++i) {
    if (out_degree[i] == 0) {
      center.push_back(i);
      neighbor.push_back(i);
    }
  }
  const Tensor xi = gather_rows(features, center);
  const Tensor xj = gather_rows(features, neighbor);
  const Tensor pair = concat({xi, sub(xj, xi)}, 1);
  const Tensor hidden = relu(block.second(relu(block.first(pair))));
  return segment_max(hidden, center, n);
}

std::vector<Edge> knn_edges(const Tensor& features, int k) {
  const int n = features.dim(0);
  const int d = features.dim(1);
  const auto x = features.data();
  std::vector<Edge> edges;
  const int kk = std::min(k, n - 1);
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = double(x[i * d + c]) - x[j * d + c];
        acc += diff * diff;
      }
      dist[j] = {j == i ? INFINITY : acc, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    for (int t = 0; t < kk; ++t) edges.push_back({i, dist[t].second});
  }
  return edges;
}

Tensor sketch_encode(const SketchGraph& graph, const SketchEncoderParams& params) {
  const int n = static_cast<int>(graph.vertices.size());
  if (n == 0) throw std::invalid_argument("sketch_encode: graph has no vertices");
  std::vector<float> coords;
  coords.reserve(2 * n);
  for (const Point2& p : graph.vertices) {
    coords.push_back(static_cast<float>(p.x));
    coords.push_back(static_cast<float>(p.y));
  }
  Tensor h = params.input(Tensor::from_data({n, 2}, std::move(coords)));
  std::vector<Tensor> levels;
  for (const EdgeMlp& block : params.blocks) {
    if (params.dynamic_knn) {
      const std::vector<Edge> dyn = knn_edges(h, params.knn_k);
      h = add(edgeconv_forward(h, dyn, block), h);
    } else {
      h = add(edgeconv_forward(h, graph.edges, block), h);
    }
    levels.push_back(h);
  }
  const Tensor per_point = params.point_proj(concat(levels, 1));
  const int d = per_point.dim(1);
  return reshape(reduce_max(per_point, 0), {1, 1, d});
}

ImageEncoderParams make_image_encoder(int in_channels, std::span<const int> widths,
                                      int feature_dim, Rng& rng, int context_convs) {
  ImageEncoderParams p;
  int prev = in_channels;
  for (int w : widths) {
    p.blocks.push_back(make_conv(3, prev, w, 2, 1, rng));
    prev = w;
  }
  for (int i = 0; i < context_convs; ++i) p.context.push_back(make_conv(3, prev, prev, 1, 1, rng));
  p.head = make_conv(1, prev, feature_dim, 1, 0, rng);
  return p;
}

void collect(NamedTensors& out, const std::string& name, const ImageEncoderParams& p) {
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    collect(out, name + ".conv" + std::to_string(i + 1), p.blocks[i]);
  }
  for (std::size_t i = 0; i < p.context.size(); ++i) {
    collect(out, name + ".context" + std::to_string(i + 1), p.context[i]);
  }
  collect(out, name + ".head", p.head);
}

Tensor image_encode(const Tensor& image, const ImageEncoderParams& params) {
  if (image.rank() != 3) {
    throw ShapeError("image_encode: expected H x W x C, got " + shape_str(image.shape()));
  }
  const int stride = params.stride();
  const int h = image.dim(0), w = image.dim(1);
  if (h % stride != 0 || w % stride != 0) {
    const int ph = (h + stride - 1) / stride * stride;
    const int pw = (w + stride - 1) / stride * stride;
    throw std::invalid_argument("image_encode: input " + std::to_string(h) + "x" +
                                std::to_string(w) + " is not divisible by stride " +
                                std::to_string(stride) + "; pad to " + std::to_string(ph) + "x" +
                                std::to_string(pw));
  }
  Tensor x = image;
  for (const Conv& block : params.blocks) x = relu(block(x));
  for (const Conv& conv : params.context) x = add(x, relu(conv(x)));
  return params.head(x);
}

Tensor sketch_encode_image_baseline(const Tensor& raster, const ImageEncoderParams& params) {
  const Tensor fmap = image_encode(raster, params);
  const int d = fmap.dim(2);
  const int cells = fmap.dim(0) * fmap.dim(1);
  return reshape(reduce_max(reshape(fmap, {cells, d}), 0), {1, 1, d});
}

Tensor rasterize_sketch(const SketchGraph& graph, int size) {
  std::vector<float> canvas(static_cast<std::size_t>(size) * size, 0.0f);
  const double margin = 2.0;
  const double half = 0.5 * (size - 1) - margin;
  const double mid = 0.5 * (size - 1);
  auto to_px = [&](const Point2& p) { return Point2{mid + p.x * half, mid + p.y * half}; };
  auto plot = [&](double x, double y) {
    const int ix = static_cast<int>(std::lround(x));
    const int iy = static_cast<int>(std::lround(y));
    if (ix >= 0 && iy >= 0 && ix < size && iy < size) canvas[iy * size + ix] = 1.0f;
  };
  for (const Edge& e : graph.edges) {
    if (e.from > e.to) continue;
    const Point2 a = to_px(graph.vertices[e.from]);
    const Point2 b = to_px(graph.vertices[e.to]);
    const int steps = std::max(1, static_cast<int>(std::ceil(std::hypot(b.x - a.x, b.y - a.y))));
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      plot(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
    }
  }
  for (const Point2& v : graph.vertices) {
    const Point2 p = to_px(v);
    plot(p.x, p.y);
  }
  return Tensor::from_data({size, size, 1}, std::move(canvas));
}

}  // namespace sketchgrasp
