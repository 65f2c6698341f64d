#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <vector>

namespace mtopo::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One value in the computation graph. Parents are held strongly so a loss
/// keeps its whole graph alive until it goes out of scope.
struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows back
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

/// Handle to a 2-D double tensor that records the operations applied to it.
class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var leaf(Matrix value, bool requires_grad);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }

  /// Zero matrix of the value's shape when no gradient has arrived.
  Matrix grad() const;
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  friend Var make_result(Matrix value, std::vector<Var> parents,
                         std::function<void(Node&)> backward);

  std::shared_ptr<Node> node_;
};

/// Builds an interior node. `backward` reads self.grad and accumulates into
/// the parents; it is dropped when no parent needs a gradient.
Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Reverse sweep from a 1x1 loss. Gradients accumulate into every leaf that
/// requires them; call zero_grad on leaves between independent steps.
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1 x c row to every row of a.
Var add_row(const Var& a, const Var& row);
/// Multiplies every row of a elementwise by a 1 x c row.
Var mul_row(const Var& a, const Var& row);

Var silu(const Var& a);
Var softplus(const Var& a);
Var tanh(const Var& a);

/// Row-wise normalization to zero mean, unit variance (no affine part).
Var layer_norm(const Var& a, double eps = 1e-5);
Var softmax_rows(const Var& a);
/// softmax_rows(scale * q k^T) v, fused so only the attention matrix is kept.
Var attention(const Var& q, const Var& k, const Var& v, double scale);

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);

/// 1 x c mean over rows.
Var mean_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);

/// Rows of `table` at `indices`; gradients scatter back into the table.
Var gather_rows(const Var& table, const std::vector<int>& indices);

/// Forward value `replacement`, gradient passed to `a` unchanged
/// (straight-through estimator).
Var straight_through(const Var& a, const Matrix& replacement);

/// Sparse left-multiplication s * a with a fixed (non-trainable) matrix.
Var sparse_left(std::shared_ptr<const SparseMatrix> s, const Var& a);

/// Plain mean squared error against a constant target.
Var mse(const Var& pred, const Matrix& target);
/// (1/n) sum_k w_k (target_k - pred_k)^2 for a 1 x n prediction.
Var weighted_mse(const Var& pred, const Matrix& target, const Matrix& weights);
/// Softmax cross-entropy of a 1 x K logit row against a class label.
Var cross_entropy(const Var& logits, int label);

}  // namespace mtopo::nn
