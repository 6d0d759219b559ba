#include "bsplc/tensor.hpp"

#include <unordered_set>

namespace bsplc::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

double* Node::grad_data() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad.data();
}

Var::Var(Shape shape, std::vector<double> value, bool requires_grad) {
  if (ad::numel(shape) != value.size())
    throw ShapeError("Var: shape " + shape_str(shape) + " does not match " +
                     std::to_string(value.size()) + " values");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Var(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Var Var::scalar(double v) { return Var({1}, {v}); }

int Var::dim(int i) const {
  const int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw ShapeError("dim index out of range for " + shape_str(shape()));
  return node_->shape[i];
}

double Var::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Var Var::detach() const { return Var(node_->shape, node_->value, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Shape shape, std::vector<double> value, const std::vector<Var>& parents,
                std::function<void(Node&)> backward) {
  Var out(std::move(shape), std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& p : parents) any = any || (p.defined() && p.requires_grad());
  if (!any) return out;
  Node* n = out.node();
  n->requires_grad = true;
  for (const Var& p : parents)
    if (p.defined()) n->parents.push_back(p.ptr());
  n->backward = std::move(backward);
  return out;
}

void backward(const Var& root) {
  if (root.numel() != 1) throw ShapeError("backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace bsplc::ad
