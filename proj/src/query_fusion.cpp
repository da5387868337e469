#include "sketchgrasp/query_fusion.hpp"

#include <string>

namespace sketchgrasp {

FusionParams make_fusion(int feature_dim, Rng& rng) {
  return {make_dense(2 * feature_dim, feature_dim, rng)};
}

FusionParams make_identity_fusion(int feature_dim) {
  std::vector<float> w(static_cast<std::size_t>(2) * feature_dim * feature_dim, 0.0f);
  for (int i = 0; i < feature_dim; ++i) w[static_cast<std::size_t>(i) * feature_dim + i] = 1.0f;
  return {{Tensor::parameter({2 * feature_dim, feature_dim}, std::move(w)),
           Tensor::parameter({feature_dim}, std::vector<float>(feature_dim, 0.0f))}};
}

void collect(NamedTensors& out, const std::string& name, const FusionParams& p) {
  collect(out, name + ".proj", p.proj);
}

Tensor relevance(const Tensor& image_features, const Tensor& sketch_feature) {
  if (image_features.rank() != 3) {
    throw ShapeError("relevance: image features must be H x W x D, got " +
                     shape_str(image_features.shape()));
  }
  const int d = image_features.dim(2);
  if (sketch_feature.numel() != static_cast<std::size_t>(d)) {
    throw ShapeError("relevance: channel mismatch between image features (D=" +
                     std::to_string(d) + ") and sketch feature " +
                     shape_str(sketch_feature.shape()));
  }
  return mul(image_features, sketch_feature);
}

Tensor fuse(const Tensor& image_features, const Tensor& relevance_maps, const FusionParams& p) {
  if (image_features.shape() != relevance_maps.shape() || image_features.rank() != 3) {
    throw ShapeError("fuse: shape mismatch " + shape_str(image_features.shape()) + " vs " +
                     shape_str(relevance_maps.shape()));
  }
  const int h = image_features.dim(0), w = image_features.dim(1), d = image_features.dim(2);
  const Tensor stacked = concat({image_features, relevance_maps}, 2);
  const Tensor projected = p.proj(reshape(stacked, {h * w, 2 * d}));
  return reshape(projected, {h, w, projected.dim(1)});
}

}  // namespace sketchgrasp
