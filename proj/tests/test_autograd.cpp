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


#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "kgdial/autograd.hpp"
#include "kgdial/rng.hpp"

using namespace kgdial::nn;

namespace {

Matrix random_matrix(kgdial::Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
  return m;
}

// Max relative error between the analytic gradient of f at each input and
// central differences, over every entry.
double check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
             std::vector<Tensor> inputs) {
  for (auto& t : inputs) t.zero_grad();
  backward(f(inputs));
  double worst = 0.0;
  const double h = 1e-5;
  for (auto& t : inputs) {
    const Matrix g = t.grad();
    for (Eigen::Index i = 0; i < t.value().size(); ++i) {
      double& w = t.mutable_value().data()[i];
      const double orig = w;
      w = orig + h;
      double up;
      double down;
      {
        NoGradGuard ng;
        up = f(inputs).item();
        w = orig - h;
        down = f(inputs).item();
      }
      w = orig;
      const double num = (up - down) / (2 * h);
      const double a = g.data()[i];
      worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("forward values of basic ops") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Matrix b(2, 2);
  b << 0, 1, 1, 0;
  auto A = Tensor::constant(a);
  auto B = Tensor::constant(b);
  CHECK(matmul(A, B).value()(0, 0) == 2);
  CHECK(matmul_nt(A, B).value()(1, 0) == 4);
  CHECK(sum(A).item() == 10);
  CHECK(mean_rows(A).value()(0, 1) == 3);
  CHECK(row_sums(A).value()(1, 0) == 7);
  const int idx[] = {1, 0};
  CHECK(pick(A, idx).value()(0, 0) == 2);
  CHECK(pick(A, idx).value()(1, 0) == 3);
  CHECK(log(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(1e-10)));
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
}

TEST_CASE("softmax rows respect the mask exactly") {
  kgdial::Rng rng(1);
  Mask m(3, 3);
  m << 1, 0, 0, 1, 1, 0, 1, 1, 1;
  auto s = softmax_rows(Tensor::constant(random_matrix(rng, 3, 3)), &m);
  for (int i = 0; i < 3; ++i) {
    CHECK(s.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = i + 1; j < 3; ++j) CHECK(s.value()(i, j) == 0.0);
  }
  auto ls = log_softmax_rows(Tensor::constant(random_matrix(rng, 2, 5)));
  for (int i = 0; i < 2; ++i) {
    CHECK(ls.value().row(i).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("no graph is recorded for constants or under NoGradGuard") {
  auto p = Tensor::parameter(Matrix::Ones(2, 2));
  auto c = Tensor::constant(Matrix::Ones(2, 2));
  CHECK_FALSE(add(c, c).requires_grad());
  CHECK(add(p, c).requires_grad());
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(add(p, c).requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("gradients accumulate across backward calls") {
  auto p = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  backward(mul(p, p));
  backward(mul(p, p));
  CHECK(p.grad()(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("finite-difference checks for every op") {
  kgdial::Rng rng(7);
  auto P = [&](Eigen::Index r, Eigen::Index c, double s = 1.0) {
    return Tensor::parameter(random_matrix(rng, r, c, s));
  };
  const double tol = 1e-6;
  using V = std::vector<Tensor>;
  // Weighted sums make every output entry matter differently.
  auto W = [&](Eigen::Index r, Eigen::Index c) {
    return Tensor::constant(random_matrix(rng, r, c));
  };
  auto reduce = [](const Tensor& t, const Tensor& w) { return sum(mul(t, w)); };

  auto w23 = W(2, 3);
  auto w22 = W(2, 2);
  auto w33 = W(3, 3);
  auto w31 = W(3, 1);
  auto w21 = W(2, 1);
  auto w13 = W(1, 3);

  CHECK(check([&](const V& x) { return reduce(matmul(x[0], x[1]), w23); }, {P(2, 4), P(4, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(matmul_nt(x[0], x[1]), w23); }, {P(2, 4), P(3, 4)}) < tol);
  CHECK(check([&](const V& x) { return reduce(add(x[0], x[1]), w23); }, {P(2, 3), P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(sub(x[0], x[1]), w23); }, {P(2, 3), P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(mul(x[0], x[1]), w23); }, {P(2, 3), P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(scale(x[0], -1.7), w23); }, {P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(add_scalar(x[0], 2.0), w23); }, {P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(add_row(x[0], x[1]), w23); }, {P(2, 3), P(1, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(mul_row(x[0], x[1]), w23); }, {P(2, 3), P(1, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(mul_col(x[0], x[1]), w23); }, {P(2, 3), P(2, 1)}) < tol);
  CHECK(check([&](const V& x) { return reduce(add_to_row(x[0], x[1], 1), w23); }, {P(2, 3), P(1, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(gelu(x[0]), w23); }, {P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(sigmoid(x[0]), w23); }, {P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(log(sigmoid(x[0])), w23); }, {P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(softmax_rows(x[0]), w33); }, {P(3, 3)}) < tol);
  Mask m(3, 3);
  m << 1, 0, 0, 1, 1, 0, 1, 0, 1;
  CHECK(check([&](const V& x) { return reduce(softmax_rows(x[0], &m), w33); }, {P(3, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(log_softmax_rows(x[0]), w33); }, {P(3, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(layer_norm_rows(x[0], x[1], x[2]), w23); },
              {P(2, 3), P(1, 3), P(1, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(normalize_rows(sigmoid(x[0])), w23); }, {P(2, 3)}) < tol);
  const int ids[] = {2, 0, 2};
  CHECK(check([&](const V& x) { return reduce(gather_rows(x[0], ids), w33); }, {P(4, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(slice_rows(x[0], 1, 2), w23); }, {P(4, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(slice_cols(x[0], 1, 2), w22); }, {P(2, 4)}) < tol);
  CHECK(check([&](const V& x) { return reduce(concat_cols({x[0], x[1]}), w23); }, {P(2, 1), P(2, 2)}) < tol);
  CHECK(check([&](const V& x) { return reduce(concat_rows({x[0], x[1]}), w33); }, {P(1, 3), P(2, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(mean_rows(x[0]), w13); }, {P(4, 3)}) < tol);
  CHECK(check([&](const V& x) { return reduce(row_sums(x[0]), w31); }, {P(3, 4)}) < tol);
  const int pk[] = {1, 0};
  CHECK(check([&](const V& x) { return reduce(pick(x[0], pk), w21); }, {P(2, 3)}) < tol);
  const double y[] = {1.0, 0.0, 1.0};
  CHECK(check([&](const V& x) { return bce_with_logits(x[0], y); }, {P(3, 1, 3.0)}) < tol);
}

TEST_CASE("bce matches the direct formula") {
  const double y[] = {1.0, 0.0};
  Matrix z(2, 1);
  z << 0.3, -40.0;
  const double expect = -std::log(1.0 / (1.0 + std::exp(-0.3))) - std::log(1.0 - 1.0 / (1.0 + std::exp(40.0)));
  CHECK(bce_with_logits(Tensor::constant(z), y).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("shape errors are reported") {
  auto a = Tensor::constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(add(a, Tensor::constant(Matrix::Ones(3, 2))), std::invalid_argument);
  CHECK_THROWS_AS(backward(a), std::invalid_argument);
}
