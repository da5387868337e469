#include "sketchgrasp/layers.hpp"

#include <cmath>

namespace sketchgrasp {

namespace {

std::vector<float> he_normal(std::size_t count, int fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / fan_in);
  std::vector<float> v(count);
  for (float& x : v) x = static_cast<float>(std_dev * rng.normal());
  return v;
}

}  // namespace

Dense make_dense(int in, int out, Rng& rng) {
  return {Tensor::parameter({in, out}, he_normal(static_cast<std::size_t>(in) * out, in, rng)),
          Tensor::parameter({out}, std::vector<float>(out, 0.0f))};
}

Conv make_conv(int kernel, int in, int out, int stride, int padding, Rng& rng) {
  const int fan_in = kernel * kernel * in;
  return {Tensor::parameter({kernel, kernel, in, out},
                            he_normal(static_cast<std::size_t>(fan_in) * out, fan_in, rng)),
          Tensor::parameter({out}, std::vector<float>(out, 0.0f)), stride, padding};
}

void collect(NamedTensors& out, const std::string& name, const Dense& layer) {
  out.emplace_back(name + ".w", layer.w);
  out.emplace_back(name + ".b", layer.b);
}

void collect(NamedTensors& out, const std::string& name, const Conv& layer) {
  out.emplace_back(name + ".w", layer.w);
  out.emplace_back(name + ".b", layer.b);
}

std::size_t count_parameters(const NamedTensors& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace sketchgrasp
