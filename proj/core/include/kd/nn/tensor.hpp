#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

namespace kd::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

// One vertex of the reverse-mode tape. Intermediate nodes live as long as
// some Var references them; parameter leaves are owned by a ParamStore.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(const Matrix& out_grad)> backward_fn;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var leaf(Matrix value);
  static Var scalar(double v);

  // Builds an interior node. `requires_grad` is inferred from the parents.
  static Var from_op(Matrix value, std::vector<Var> parents,
                     std::function<void(const Matrix&)> backward_fn);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }

  [[nodiscard]] const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  [[nodiscard]] const Matrix& grad() const { return node_->grad; }
  [[nodiscard]] bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
  [[nodiscard]] double item() const;

  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 and propagates through the tape. Leaf grads
// accumulate across calls until explicitly zeroed.
void backward(const Var& root);

}  // namespace kd::nn
