#include "plc/autograd.hpp"

#include <unordered_set>

#include "plc/errors.hpp"

namespace plc {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Real Var::item() const {
  if (value().size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return value()[0];
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(const Node&)> backward) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  Var out(std::move(value), needs);
  if (needs) {
    Node* n = out.node();
    n->inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (in.defined()) n->inputs.push_back(in.shared());
    }
    n->backward = std::move(backward);
  }
  return out;
}

Tensor* grad_target(const Var& input) {
  if (!input.requires_grad()) return nullptr;
  return &input.node()->grad_buffer();
}

void backward(const Var& root) { backward(root, Tensor(root.shape(), Real{1})); }

void backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape()) throw ShapeError("backward seed shape mismatch");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Release interior nodes so the graph can be freed.
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
      n->grad = Tensor{};
    }
  }
}

Var detach(const Var& v) { return Var(v.value(), false); }

}  // namespace plc
