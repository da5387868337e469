#include "sketchgrasp/optim.hpp"

#include <stdexcept>
#include <string>

namespace sketchgrasp {

OptimizerState make_optimizer_state(std::span<const Tensor> params, SgdHyper hyper) {
  OptimizerState state;
  state.hyper = hyper;
  state.velocity.reserve(params.size());
  for (const Tensor& p : params) state.velocity.emplace_back(p.numel(), 0.0f);
  return state;
}

void sgd_step(std::span<Tensor> params, OptimizerState& state) {
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_step: optimizer state tracks " +
                                std::to_string(state.velocity.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw std::logic_error("sgd_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  const auto [lr, momentum, wd] = state.hyper;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_data();
    auto grad = params[i].mutable_grad();
    auto& v = state.velocity[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      v[k] = momentum * v[k] + grad[k] + wd * value[k];
      value[k] -= lr * v[k];
    }
    params[i].zero_grad();
  }
}

}  // namespace sketchgrasp
