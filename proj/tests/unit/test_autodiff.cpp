// Copyright 2026 The sphreg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include "sphreg/autodiff.hpp"
#include "test_util.hpp"

namespace sphreg {
namespace {

using ad::Var;

TEST_CASE("elementary operations have correct gradients") {
  std::mt19937_64 rng(41);
  const Matrix a = test::random_matrix(4, 3, rng);
  const Matrix b = test::random_matrix(4, 3, rng);
  const Matrix c = test::random_matrix(3, 5, rng);
  const Matrix k = test::random_matrix(2, 4, rng);
  using V = std::vector<Var>;
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::add(v[0], v[1]); }, {a, b}, 1) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::sub(v[0], v[1]); }, {a, b}, 2) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::scale(v[0], -2.5); }, {a}, 3) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::sum({v[0], v[1], v[0]}); }, {a, b}, 4) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::matmul(v[0], v[1]); }, {a, c}, 5) < 1e-7);
  CHECK(test::gradient_mismatch([&](ad::Tape&, const V& v) { return ad::matmul(k, v[0]); }, {a}, 6) < 1e-7);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::hadamard(v[0], v[1]); }, {a, b}, 7) < 1e-7);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::hcat({v[0], v[1]}); }, {a, b}, 8) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::top_rows(v[0], 2); }, {a}, 9) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::relu(v[0]); }, {a}, 10) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::elu(v[0], 0.7); }, {a}, 11) < 1e-6);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::softmax_rows(v[0]); }, {a}, 12) < 1e-6);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::sum_all(v[0]); }, {a}, 13) < 1e-8);
  CHECK(test::gradient_mismatch([](ad::Tape&, const V& v) { return ad::normalize_rows(v[0]); }, {a}, 14) < 1e-6);
}

TEST_CASE("forward values") {
  ad::Tape tape;
  Matrix m(2, 2);
  m << 1.0, -2.0, 0.0, 3.0;
  const Var x = tape.constant(m);
  CHECK(ad::relu(x).value()(0, 1) == 0.0);
  CHECK(ad::sum_all(x).value()(0, 0) == 2.0);
  const Matrix s = ad::softmax_rows(x).value();
  CHECK(s.rowwise().sum().isApprox(Vector::Ones(2)));
  CHECK(ad::normalize_rows(x).value().row(1).norm() == doctest::Approx(1.0));
}

TEST_CASE("gradients accumulate over shared uses and skip constants") {
  ad::Tape tape;
  const Var p = tape.parameter(Matrix::Constant(1, 1, 3.0));
  const Var c = tape.constant(Matrix::Constant(1, 1, 5.0));
  const Var y = ad::add(ad::hadamard(p, p), ad::hadamard(p, c));
  tape.backward(y);
  CHECK(tape.grad(p)(0, 0) == doctest::Approx(2.0 * 3.0 + 5.0));
  CHECK(tape.grad(c)(0, 0) == 0.0);
  CHECK_FALSE(tape.requires_grad(c));
}

TEST_CASE("param binder maps one leaf per matrix") {
  ad::Tape tape;
  ad::ParamBinder bind(tape, true);
  const Matrix w = Matrix::Constant(1, 1, 2.0);
  const Matrix unused = Matrix::Ones(2, 2);
  const Var a = bind(w);
  const Var b = bind(w);
  CHECK(a.id() == b.id());
  tape.backward(ad::hadamard(a, b));
  CHECK(bind.grad(w)(0, 0) == doctest::Approx(4.0));
  CHECK(bind.grad(unused).isZero());

  ad::Tape frozen_tape;
  ad::ParamBinder frozen(frozen_tape, false);
  CHECK_FALSE(frozen_tape.requires_grad(frozen(w)));
}

TEST_CASE("backward requires a scalar root") {
  ad::Tape tape;
  const Var p = tape.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(p), std::invalid_argument);
  CHECK_THROWS_AS(ad::add(p, tape.parameter(Matrix::Ones(3, 2))), std::invalid_argument);
}

}  // namespace
}  // namespace sphreg
