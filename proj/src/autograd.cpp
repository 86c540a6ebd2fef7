// Copyright 2026 The kgdial Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kgdial/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace kgdial::nn {

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* op, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op, "shape mismatch");
}

// Builds a result node. Parents and the closure are dropped when no input
// needs a gradient or recording is off.
Tensor make(Matrix value, std::initializer_list<Tensor> parents,
            std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    for (const auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

Tensor make_many(Matrix value, const std::vector<Tensor>& parents,
                 std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    for (const auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

inline bool wants(const Node* n) { return n->requires_grad; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) {
    return Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  require(loss.defined(), "backward", "undefined tensor");
  require(loss.rows() == 1 && loss.cols() == 1, "backward", "loss must be 1x1");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) {
      n->backward(*n);
      // Interior gradients are no longer needed.
      n->grad.resize(0, 0);
    }
  }
}

// ---- Linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul", "inner dimensions differ");
  Node* na = a.node();
  Node* nb = b.node();
  return make(a.value() * b.value(), {a, b}, [na, nb](Node& self) {
    if (wants(na)) na->accumulate(self.grad * nb->value.transpose());
    if (wants(nb)) nb->accumulate(na->value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), "matmul_nt", "inner dimensions differ");
  Node* na = a.node();
  Node* nb = b.node();
  return make(a.value() * b.value().transpose(), {a, b}, [na, nb](Node& self) {
    if (wants(na)) na->accumulate(self.grad * nb->value);
    if (wants(nb)) nb->accumulate(self.grad.transpose() * na->value);
  });
}

// ---- Elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  Node* na = a.node();
  Node* nb = b.node();
  return make(a.value() + b.value(), {a, b}, [na, nb](Node& self) {
    if (wants(na)) na->accumulate(self.grad);
    if (wants(nb)) nb->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  Node* na = a.node();
  Node* nb = b.node();
  return make(a.value() - b.value(), {a, b}, [na, nb](Node& self) {
    if (wants(na)) na->accumulate(self.grad);
    if (wants(nb)) nb->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  Node* na = a.node();
  Node* nb = b.node();
  return make(a.value().cwiseProduct(b.value()), {a, b}, [na, nb](Node& self) {
    if (wants(na)) na->accumulate(self.grad.cwiseProduct(nb->value));
    if (wants(nb)) nb->accumulate(self.grad.cwiseProduct(na->value));
  });
}

Tensor scale(const Tensor& a, double s) {
  Node* na = a.node();
  return make(a.value() * s, {a}, [na, s](Node& self) { na->accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Node* na = a.node();
  return make((a.value().array() + s).matrix(), {a},
              [na](Node& self) { na->accumulate(self.grad); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", "bad row shape");
  Node* na = a.node();
  Node* nr = row.node();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a, row}, [na, nr](Node& self) {
    if (wants(na)) na->accumulate(self.grad);
    if (wants(nr)) nr->accumulate(self.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row", "bad row shape");
  Node* na = a.node();
  Node* nr = row.node();
  Matrix out = a.value();
  out.array().rowwise() *= row.value().row(0).array();
  return make(std::move(out), {a, row}, [na, nr](Node& self) {
    if (wants(na)) {
      Matrix g = self.grad;
      g.array().rowwise() *= nr->value.row(0).array();
      na->accumulate(g);
    }
    if (wants(nr)) nr->accumulate(self.grad.cwiseProduct(na->value).colwise().sum());
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col", "bad column shape");
  Node* na = a.node();
  Node* nc = col.node();
  Matrix out = a.value();
  out.array().colwise() *= col.value().col(0).array();
  return make(std::move(out), {a, col}, [na, nc](Node& self) {
    if (wants(na)) {
      Matrix g = self.grad;
      g.array().colwise() *= nc->value.col(0).array();
      na->accumulate(g);
    }
    if (wants(nc)) nc->accumulate(self.grad.cwiseProduct(na->value).rowwise().sum());
  });
}

Tensor add_to_row(const Tensor& a, const Tensor& row, Eigen::Index i) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_to_row", "bad row shape");
  require(i >= 0 && i < a.rows(), "add_to_row", "row index out of range");
  Node* na = a.node();
  Node* nr = row.node();
  Matrix out = a.value();
  out.row(i) += row.value().row(0);
  return make(std::move(out), {a, row}, [na, nr, i](Node& self) {
    if (wants(na)) na->accumulate(self.grad);
    if (wants(nr)) nr->accumulate(self.grad.row(i));
  });
}

Tensor gelu(const Tensor& a) {
  Node* na = a.node();
  Matrix out = a.value().unaryExpr([](double x) { return x * normal_cdf(x); });
  return make(std::move(out), {a}, [na](Node& self) {
    Matrix d = na->value.unaryExpr(
        [](double x) { return normal_cdf(x) + x * normal_pdf(x); });
    na->accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor sigmoid(const Tensor& a) {
  Node* na = a.node();
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make(out, {a}, [na, out](Node& self) {
    na->accumulate(
        self.grad.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Tensor log(const Tensor& a, double floor) {
  Node* na = a.node();
  Matrix out = a.value().unaryExpr([floor](double x) { return std::log(std::max(x, floor)); });
  return make(std::move(out), {a}, [na, floor](Node& self) {
    Matrix d = na->value.unaryExpr([floor](double x) { return x > floor ? 1.0 / x : 0.0; });
    na->accumulate(self.grad.cwiseProduct(d));
  });
}

// ---- Row-wise normalizations ----

Tensor softmax_rows(const Tensor& a, const Mask* mask) {
  if (mask) {
    require(mask->rows() == a.rows() && mask->cols() == a.cols(), "softmax_rows",
            "mask shape mismatch");
  }
  Node* na = a.node();
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) mx = std::max(mx, x(i, j));
    }
    require(std::isfinite(mx), "softmax_rows", "row has no visible entries");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) {
        out(i, j) = std::exp(x(i, j) - mx);
        z += out(i, j);
      }
    }
    out.row(i) /= z;
  }
  return make(out, {a}, [na, out](Node& self) {
    Eigen::VectorXd dots = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = self.grad;
    g.colwise() -= dots;
    na->accumulate(g.cwiseProduct(out));
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  Node* na = a.node();
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const double lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return make(out, {a}, [na, out](Node& self) {
    Matrix p = out.array().exp();
    Eigen::VectorXd s = self.grad.rowwise().sum();
    Matrix g = self.grad;
    g -= (p.array().colwise() * s.array()).matrix();
    na->accumulate(g);
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm", "bad gamma");
  require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm", "bad beta");
  Node* nx = x.node();
  Node* ng = gamma.node();
  Node* nb = beta.node();
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    auto centered = x.value().row(i).array() - mu;
    const double var = centered.square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make(std::move(out), {x, gamma, beta},
              [nx, ng, nb, xhat, inv_std, c](Node& self) {
                if (wants(ng)) ng->accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                if (wants(nb)) nb->accumulate(self.grad.colwise().sum());
                if (wants(nx)) {
                  Matrix dxhat = self.grad;
                  dxhat.array().rowwise() *= ng->value.row(0).array();
                  Matrix dx(dxhat.rows(), c);
                  for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                    const double m1 = dxhat.row(i).mean();
                    const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(c);
                    dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) *
                                inv_std(i);
                  }
                  nx->accumulate(dx);
                }
              });
}

Tensor normalize_rows(const Tensor& a) {
  Node* na = a.node();
  Eigen::VectorXd s = a.value().rowwise().sum();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    require(s(i) != 0.0, "normalize_rows", "row sums to zero");
  }
  Matrix out = a.value();
  out.array().colwise() /= s.array();
  return make(out, {a}, [na, out, s](Node& self) {
    Eigen::VectorXd dots = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = self.grad;
    g.colwise() -= dots;
    g.array().colwise() /= s.array();
    na->accumulate(g);
  });
}

// ---- Shape ----

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  Node* nt = table.node();
  const auto n = static_cast<Eigen::Index>(ids.size());
  Matrix out(n, table.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    require(id >= 0 && id < table.rows(), "gather_rows", "id out of range");
    out.row(i) = table.value().row(id);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make(std::move(out), {table}, [nt, idx = std::move(idx)](Node& self) {
    if (nt->grad.size() == 0) nt->grad = Matrix::Zero(nt->value.rows(), nt->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      nt->grad.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows",
          "range out of bounds");
  Node* na = a.node();
  return make(a.value().middleRows(start, count), {a}, [na, start, count](Node& self) {
    if (na->grad.size() == 0) na->grad = Matrix::Zero(na->value.rows(), na->value.cols());
    na->grad.middleRows(start, count) += self.grad;
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols",
          "range out of bounds");
  Node* na = a.node();
  return make(a.value().middleCols(start, count), {a}, [na, start, count](Node& self) {
    if (na->grad.size() == 0) na->grad = Matrix::Zero(na->value.rows(), na->value.cols());
    na->grad.middleCols(start, count) += self.grad;
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const Eigen::Index n = parts.front().rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    require(p.rows() == n, "concat_cols", "row counts differ");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<Node*> nodes;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
    nodes.push_back(p.node());
  }
  return make_many(std::move(out), parts, [nodes](Node& self) {
    Eigen::Index o = 0;
    for (Node* p : nodes) {
      const Eigen::Index w = p->value.cols();
      if (wants(p)) p->accumulate(self.grad.middleCols(o, w));
      o += w;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const Eigen::Index c = parts.front().cols();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    require(p.cols() == c, "concat_rows", "column counts differ");
    total += p.rows();
  }
  Matrix out(total, c);
  std::vector<Node*> nodes;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
    nodes.push_back(p.node());
  }
  return make_many(std::move(out), parts, [nodes](Node& self) {
    Eigen::Index o = 0;
    for (Node* p : nodes) {
      const Eigen::Index h = p->value.rows();
      if (wants(p)) p->accumulate(self.grad.middleRows(o, h));
      o += h;
    }
  });
}

// ---- Reductions ----

Tensor sum(const Tensor& a) {
  Node* na = a.node();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), {a}, [na](Node& self) {
    na->accumulate(Matrix::Constant(na->value.rows(), na->value.cols(), self.grad(0, 0)));
  });
}

Tensor mean_rows(const Tensor& a) {
  require(a.rows() > 0, "mean_rows", "empty input");
  Node* na = a.node();
  Matrix out = a.value().colwise().mean();
  return make(std::move(out), {a}, [na](Node& self) {
    const double inv = 1.0 / static_cast<double>(na->value.rows());
    Matrix g(na->value.rows(), na->value.cols());
    g.rowwise() = self.grad.row(0) * inv;
    na->accumulate(g);
  });
}

Tensor row_sums(const Tensor& a) {
  Node* na = a.node();
  Matrix out = a.value().rowwise().sum();
  return make(std::move(out), {a}, [na](Node& self) {
    Matrix g(na->value.rows(), na->value.cols());
    g.colwise() = self.grad.col(0);
    na->accumulate(g);
  });
}

Tensor pick(const Tensor& a, std::span<const int> index) {
  require(static_cast<Eigen::Index>(index.size()) == a.rows(), "pick",
          "one index per row required");
  Node* na = a.node();
  Matrix out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int j = index[static_cast<std::size_t>(i)];
    require(j >= 0 && j < a.cols(), "pick", "index out of range");
    out(i, 0) = a.value()(i, j);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make(std::move(out), {a}, [na, idx = std::move(idx)](Node& self) {
    if (na->grad.size() == 0) na->grad = Matrix::Zero(na->value.rows(), na->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      na->grad(static_cast<Eigen::Index>(i), idx[i]) += self.grad(static_cast<Eigen::Index>(i), 0);
    }
  });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  require(logits.cols() == 1, "bce_with_logits", "logits must be a column");
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "bce_with_logits",
          "one target per logit required");
  Node* nz = logits.node();
  std::vector<double> y(targets.begin(), targets.end());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double z = logits.value()(i, 0);
    total += std::max(z, 0.0) - y[static_cast<std::size_t>(i)] * z +
             std::log1p(std::exp(-std::abs(z)));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return make(std::move(out), {logits}, [nz, y = std::move(y)](Node& self) {
    Matrix g(nz->value.rows(), 1);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double z = nz->value(i, 0);
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g(i, 0) = (s - y[static_cast<std::size_t>(i)]) * self.grad(0, 0);
    }
    nz->accumulate(g);
  });
}

}  // namespace kgdial::nn
