#include "mtopo/nn/tensor.hpp"

#include "mtopo/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace mtopo::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorCode::ShapeMismatch, what);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Var::constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Matrix value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  require(rows() == 1 && cols() == 1, "item: not a scalar");
  return node_->value(0, 0);
}

Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be 1x1");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (n->grad.size() != 0) n->backward(*n);
    // Interior gradients are no longer needed once propagated; leaves keep theirs.
    n->grad.resize(0, 0);
  }
}

#define PARENT(i) (*self.parents[i])

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& x = PARENT(0);
    Node& y = PARENT(1);
    if (x.requires_grad) x.accumulate(self.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate(x.value.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& x = PARENT(0);
    Node& y = PARENT(1);
    if (x.requires_grad) x.accumulate(self.grad * y.value);
    if (y.requires_grad) y.accumulate(self.grad.transpose() * x.value);
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (int i = 0; i < 2; ++i) {
      if (PARENT(i).requires_grad) PARENT(i).accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (PARENT(0).requires_grad) PARENT(0).accumulate(self.grad);
    if (PARENT(1).requires_grad) PARENT(1).accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& x = PARENT(0);
    Node& y = PARENT(1);
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) { PARENT(0).accumulate(self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    if (PARENT(0).requires_grad) PARENT(0).accumulate(self.grad);
    if (PARENT(1).requires_grad) PARENT(1).accumulate(self.grad.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row: shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(out), {a, row}, [](Node& self) {
    Node& x = PARENT(0);
    Node& r = PARENT(1);
    if (x.requires_grad) {
      x.accumulate((self.grad.array().rowwise() * r.value.row(0).array()).matrix());
    }
    if (r.requires_grad) r.accumulate(self.grad.cwiseProduct(x.value).colwise().sum());
  });
}

Var silu(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return x * sigmoid(x); });
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& x = PARENT(0);
    Matrix d = x.value.unaryExpr([](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    });
    x.accumulate(self.grad.cwiseProduct(d));
  });
}

Var softplus(const Var& a) {
  Matrix out = a.value().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& x = PARENT(0);
    x.accumulate(self.grad.cwiseProduct(x.value.unaryExpr([](double v) { return sigmoid(v); })));
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_result(out, {a}, [out](Node& self) {
    PARENT(0).accumulate(self.grad.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var layer_norm(const Var& a, double eps) {
  const Eigen::Index n = a.cols();
  Matrix xhat(a.rows(), n);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto row = a.value().row(i);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (row.array() - mu) * inv_std[i];
  }
  return make_result(xhat, {a}, [xhat, inv_std](Node& self) {
    const Matrix& g = self.grad;
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double mg = g.row(i).mean();
      const double mgx = g.row(i).cwiseProduct(xhat.row(i)).mean();
      dx.row(i) = inv_std[i] * (g.row(i).array() - mg - xhat.row(i).array() * mgx);
    }
    PARENT(0).accumulate(dx);
  });
}

Var softmax_rows(const Var& a) {
  Matrix y(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.value().row(i).maxCoeff();
    y.row(i) = (a.value().row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return make_result(std::move(y), {a}, [](Node& self) {
    const Matrix& g = self.grad;
    const Matrix& y = self.value;
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      dx.row(i) = y.row(i).array() * (g.row(i).array() - dot);
    }
    PARENT(0).accumulate(dx);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, double scale) {
  require(q.cols() == k.cols() && k.rows() == v.rows(), "attention: shape mismatch");
  auto p = std::make_shared<Matrix>(scale * (q.value() * k.value().transpose()));
  for (Eigen::Index i = 0; i < p->rows(); ++i) {
    const double m = p->row(i).maxCoeff();
    p->row(i) = (p->row(i).array() - m).exp();
    p->row(i) /= p->row(i).sum();
  }
  Matrix out = *p * v.value();
  return make_result(std::move(out), {q, k, v}, [p, scale](Node& self) {
    Node& nq = PARENT(0);
    Node& nk = PARENT(1);
    Node& nv = PARENT(2);
    if (nv.requires_grad) nv.accumulate(p->transpose() * self.grad);
    if (!nq.requires_grad && !nk.requires_grad) return;
    Matrix ds = self.grad * nv.value.transpose();
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
      const double dot = ds.row(i).dot(p->row(i));
      ds.row(i) = p->row(i).array() * (ds.row(i).array() - dot);
    }
    ds *= scale;
    if (nq.requires_grad) nq.accumulate(ds * nk.value);
    if (nk.requires_grad) nk.accumulate(ds.transpose() * nq.value);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count > 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    Node& x = PARENT(0);
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    g.middleCols(start, count) = self.grad;
    x.accumulate(g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == parts.front().rows(), "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(parts.front().rows(), cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Var mean_rows(const Var& a) {
  Matrix out = a.value().colwise().mean();
  const double inv = 1.0 / static_cast<double>(a.rows());
  return make_result(std::move(out), {a}, [inv](Node& self) {
    Node& x = PARENT(0);
    x.accumulate(Matrix(self.grad.replicate(x.value.rows(), 1) * inv));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& x = PARENT(0);
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var gather_rows(const Var& table, const std::vector<int>& indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < table.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  return make_result(std::move(out), {table}, [indices](Node& self) {
    Node& t = PARENT(0);
    Matrix g = Matrix::Zero(t.value.rows(), t.value.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      g.row(indices[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(g);
  });
}

Var straight_through(const Var& a, const Matrix& replacement) {
  require(replacement.rows() == a.rows() && replacement.cols() == a.cols(),
          "straight_through: shape mismatch");
  return make_result(replacement, {a}, [](Node& self) { PARENT(0).accumulate(self.grad); });
}

Var sparse_left(std::shared_ptr<const SparseMatrix> s, const Var& a) {
  require(s->cols() == a.rows(), "sparse_left: shape mismatch");
  Matrix out = (*s) * a.value();
  return make_result(std::move(out), {a}, [s](Node& self) {
    PARENT(0).accumulate(Matrix(s->transpose() * self.grad));
  });
}

Var mse(const Var& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse: shape mismatch");
  const Matrix diff = pred.value() - target;
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_result(std::move(out), {pred}, [diff, n](Node& self) {
    PARENT(0).accumulate(diff * (2.0 * self.grad(0, 0) / n));
  });
}

Var weighted_mse(const Var& pred, const Matrix& target, const Matrix& weights) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols() &&
              weights.rows() == target.rows() && weights.cols() == target.cols(),
          "weighted_mse: shape mismatch");
  const Matrix diff = pred.value() - target;
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = weights.cwiseProduct(diff.cwiseProduct(diff)).sum() / n;
  return make_result(std::move(out), {pred}, [diff, weights, n](Node& self) {
    PARENT(0).accumulate(weights.cwiseProduct(diff) * (2.0 * self.grad(0, 0) / n));
  });
}

Var cross_entropy(const Var& logits, int label) {
  require(logits.rows() == 1 && label >= 0 && label < logits.cols(), "cross_entropy: bad input");
  const auto& z = logits.value();
  const double m = z.maxCoeff();
  Matrix p = (z.array() - m).exp().matrix();
  const double s = p.sum();
  p /= s;
  Matrix out(1, 1);
  out(0, 0) = -(z(0, label) - m - std::log(s));
  return make_result(std::move(out), {logits}, [p, label](Node& self) {
    Matrix g = p;
    g(0, label) -= 1.0;
    PARENT(0).accumulate(g * self.grad(0, 0));
  });
}

#undef PARENT

}  // namespace mtopo::nn
