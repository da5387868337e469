#pragma once

#include "sketchgrasp/layers.hpp"

namespace sketchgrasp {

/// Per-location linear projection of [F_c | F_rel] (2D channels) back to D.
struct FusionParams {
  Dense proj;  // 2D -> D
};

FusionParams make_fusion(int feature_dim, Rng& rng);
/// Projection initialized as [I | 0], so that fuse(F_c, F_rel) == F_c.
FusionParams make_identity_fusion(int feature_dim);
void collect(NamedTensors& out, const std::string& name, const FusionParams& p);

/// F_rel[h, w, :] = F_c[h, w, :] * F_s (Hadamard product per location).
/// F_c is [H x W x D], F_s is [1 x 1 x D].
Tensor relevance(const Tensor& image_features, const Tensor& sketch_feature);

/// Concatenates F_c and F_rel per location and projects to [H x W x D].
Tensor fuse(const Tensor& image_features, const Tensor& relevance_maps, const FusionParams& p);

}  // namespace sketchgrasp
