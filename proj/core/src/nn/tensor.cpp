#include "kd/nn/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace kd::nn {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var Var::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Var::from_op(Matrix value, std::vector<Var> parents,
                 std::function<void(const Matrix&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) {
      node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) {
      node->parents.push_back(p.node_);
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw std::logic_error("Var::item on a non-scalar value");
  }
  return node_->value(0, 0);
}

void backward(const Var& root) {
  if (!root.defined()) {
    throw std::invalid_argument("backward on an undefined Var");
  }
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward requires a scalar root");
  }
  if (!root.requires_grad()) {
    return;
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) {
      node->backward_fn(node->grad);
    }
  }
  // Interior grads are dropped so a reused subgraph cannot double count.
  for (Node* node : order) {
    if (node->backward_fn) {
      node->grad.resize(0, 0);
    }
  }
}

}  // namespace kd::nn
