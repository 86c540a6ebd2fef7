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

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tensor is a shared handle to a graph node. Operations record their
// parents and a backward closure only when some input requires a gradient
// and gradient recording is enabled (see NoGradGuard). backward() walks the
// graph in reverse topological order and accumulates into every node that
// requires a gradient, including long-lived parameters.

#ifndef KGDIAL_AUTOGRAD_HPP_
#define KGDIAL_AUTOGRAD_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace kgdial::nn {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Attention visibility: 1 where row position may attend to column position.
using Mask =
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  // Zero matrix of the value's shape when no gradient has arrived.
  Matrix grad() const;
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording for its lifetime (inference).
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

// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
void backward(const Tensor& loss);

// ---- Linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T

// ---- Elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);   // broadcast 1 x c
Tensor mul_row(const Tensor& a, const Tensor& row);   // broadcast 1 x c
Tensor mul_col(const Tensor& a, const Tensor& col);   // broadcast n x 1
// Copy of a with `row` (1 x c) added to row index i.
Tensor add_to_row(const Tensor& a, const Tensor& row, Eigen::Index i);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Natural log of max(a, floor); no gradient below the floor.
Tensor log(const Tensor& a, double floor = 1e-10);

// ---- Row-wise normalizations ----
// Softmax over each row; masked-out entries are exactly zero.
Tensor softmax_rows(const Tensor& a, const Mask* mask = nullptr);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps = 1e-5);
// Divides each row by its sum.
Tensor normalize_rows(const Tensor& a);

// ---- Shape ----
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// ---- Reductions ----
Tensor sum(const Tensor& a);             // 1 x 1
Tensor mean_rows(const Tensor& a);       // 1 x c, average of the rows
Tensor row_sums(const Tensor& a);        // n x 1
// out(i) = a(i, index[i]).
Tensor pick(const Tensor& a, std::span<const int> index);

// Sum over rows of softplus(z) - y z, i.e. binary cross-entropy on logits.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

}  // namespace kgdial::nn

#endif  // KGDIAL_AUTOGRAD_HPP_
