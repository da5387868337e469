#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sketchgrasp/ops.hpp"
#include "sketchgrasp/rng.hpp"

namespace sketchgrasp {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Affine layer; w is [in x out].
struct Dense {
  Tensor w;
  Tensor b;
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

/// Channel-last convolution; w is [k x k x in x out].
struct Conv {
  Tensor w;
  Tensor b;
  int stride = 1;
  int padding = 0;
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }
};

/// He-normal weights, zero bias.
Dense make_dense(int in, int out, Rng& rng);
Conv make_conv(int kernel, int in, int out, int stride, int padding, Rng& rng);

void collect(NamedTensors& out, const std::string& name, const Dense& layer);
void collect(NamedTensors& out, const std::string& name, const Conv& layer);

std::size_t count_parameters(const NamedTensors& params);

}  // namespace sketchgrasp
