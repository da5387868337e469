#pragma once

#include <span>
#include <vector>

#include "sketchgrasp/tensor.hpp"

namespace sketchgrasp {

struct SgdHyper {
  float learning_rate = 0.005f;
  float momentum = 0.9f;
  float weight_decay = 0.0005f;
};

/// Momentum buffers for one fixed, ordered parameter list.
struct OptimizerState {
  SgdHyper hyper;
  std::vector<std::vector<float>> velocity;
};

OptimizerState make_optimizer_state(std::span<const Tensor> params, SgdHyper hyper);

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v;
/// then zeroes the gradients. Weight decay applies to every parameter.
/// Throws if a parameter has no gradient buffer.
void sgd_step(std::span<Tensor> params, OptimizerState& state);

}  // namespace sketchgrasp
