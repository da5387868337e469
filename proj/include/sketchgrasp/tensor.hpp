#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchgrasp {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when an op receives operands whose shapes cannot be combined.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the finite-value debug check (see set_finite_checks).
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// One vertex of the recorded computation. Children hold strong references to
// their parents, so a graph lives exactly as long as its outputs.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::string op;

  // Grad buffer of this node, zero-allocated on first use.
  std::span<float> grad_buffer();
};

}  // namespace detail

/// Dense row-major float32 tensor with optional reverse-mode gradient.
///
/// Tensors are cheap handles: copies alias the same storage. Ops in ops.hpp
/// produce new tensors and, when any operand requires a gradient and grad mode
/// is enabled on this thread, record how to propagate gradients back.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_data(Shape shape, std::vector<float> data);
  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<float> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Same values, no history.
  Tensor detach() const;
  /// Deep copy of values as a fresh tensor with no history.
  Tensor clone() const;

  const std::string& op_name() const;

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Populates gradients of every requires_grad tensor reachable from `loss`.
/// Contributions accumulate into existing grad buffers.
void backward(const Tensor& loss);

/// Disables history recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// When enabled, every op checks its output for NaN/Inf and throws NonFiniteError.
void set_finite_checks(bool enabled);
bool finite_checks();

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Builds an op output. History is kept only if grad mode is on and a parent
// requires grad; otherwise `fn` is dropped.
Tensor make_result(std::string op, Shape shape, std::vector<float> value,
                   std::vector<Tensor> parents, BackwardFn fn);

}  // namespace detail

}  // namespace sketchgrasp
