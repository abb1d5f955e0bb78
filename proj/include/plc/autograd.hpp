#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "plc/tensor.hpp"

namespace plc {

/// One vertex of the reverse-mode tape. Leaves are parameters or constants;
/// interior nodes carry a closure that pushes `grad` into their inputs.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Node&)> backward;

  /// Gradient buffer, zero-initialised to the value's shape on first use.
  Tensor& grad_buffer();
};

/// Shared handle to a tape node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad() { node_->grad = Tensor{}; }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

  /// Scalar value of a single-element variable.
  Real item() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Whether new operations record themselves on the tape (thread-local).
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the result of an operation. The closure is kept only when grad
/// mode is on and some input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(const Node&)> backward);

/// Gradient accumulator for an input inside a backward closure, or nullptr
/// when that input does not need one.
Tensor* grad_target(const Var& input);

/// Runs reverse accumulation from a single-element root (seed 1).
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

/// Returns a constant copy cut off from the tape.
Var detach(const Var& v);

}  // namespace plc
