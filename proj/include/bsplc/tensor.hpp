#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a shared handle to a graph node. Ops build new nodes whose backward
// closures accumulate into their parents' gradients. Parameters are leaf Vars
// with requires_grad set; intermediate nodes are freed with their last handle.

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsplc::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Zero-initialised gradient buffer, allocated on first use.
  double* grad_data();
};

class Var {
 public:
  Var() = default;
  Var(Shape shape, std::vector<double> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var zeros(Shape shape, bool requires_grad = false);
  static Var scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const;
  std::size_t numel() const { return node_->value.size(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& value_mut() { return node_->value; }
  const double* data() const { return node_->value.data(); }
  /// Gradient; empty when nothing flowed into this node.
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;
  void zero_grad() { node_->grad.clear(); }
  /// Copy of the value with no history.
  Var detach() const;
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Graph recording switch. Disabled inside NoGradGuard scopes.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps an op result. The backward closure is kept only when recording is on
/// and at least one parent requires a gradient.
Var make_result(Shape shape, std::vector<double> value, const std::vector<Var>& parents,
                std::function<void(Node&)> backward);

/// Back-propagates from a scalar root (seed gradient 1).
void backward(const Var& root);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace bsplc::ad
