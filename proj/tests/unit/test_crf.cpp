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

#include <cmath>

#include "crf_instances.hpp"
#include "sphreg/crf.hpp"
#include "test_util.hpp"

namespace sphreg {
namespace {

Matrix random_stochastic(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Matrix q = test::random_matrix(rows, cols, rng, 1.5).array().exp();
  for (Eigen::Index r = 0; r < rows; ++r) q.row(r) /= q.row(r).sum();
  return q;
}

double arc(const Vec3& a, const Vec3& b) { return std::acos(std::clamp(a.dot(b), -1.0, 1.0)); }

double kernel(const ControlGrid& g, int i, int li, int j, int lj, double sigma) {
  const double a = arc(g.label_positions[i].row(li).transpose(), g.label_positions[j].row(lj).transpose());
  return std::exp(-a * a / (2.0 * sigma * sigma));
}

// Nested-loop energy over ordered adjacent pairs.
double oracle_energy(const std::vector<int>& x, const Matrix& q, const ControlGrid& g,
                     const CrfParams& p) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e += -std::log(q(i, x[i]) + 1e-12);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int j : g.neighbors[i])
      e += p.weight_value() * p.mu(x[i], x[j]) * kernel(g, i, x[i], j, x[j], p.sigma_value());
  return e;
}

// One mean-field step written per label pair.
Matrix oracle_step(const Matrix& q0, const Matrix& q, const ControlGrid& g, const CrfParams& p) {
  Matrix out(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Vector z(q.cols());
    for (Eigen::Index l = 0; l < q.cols(); ++l) {
      double m = 0.0;
      for (int j : g.neighbors[i])
        for (Eigen::Index k = 0; k < q.cols(); ++k)
          m += kernel(g, i, l, j, k, p.sigma_value()) * p.mu(l, k) * q(j, k);
      z[l] = std::log(q0(i, l) + 1e-12) - p.weight_value() * m;
    }
    const Vector e = (z.array() - z.maxCoeff()).exp();
    out.row(i) = (e / e.sum()).transpose();
  }
  return out;
}

TEST_CASE("default parameters") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const CrfParams p = default_crf_params(g);
  CHECK(p.iterations == 5);
  CHECK(p.weight_value() == 1.0);
  CHECK((p.mu.array() == (Matrix::Ones(7, 7) - Matrix::Identity(7, 7)).array()).all());
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < g.num_controls(); ++i)
    for (int j : g.neighbors[i]) {
      total += arc(g.control_positions.row(i).transpose(), g.control_positions.row(j).transpose());
      ++count;
    }
  CHECK(p.sigma_value() == doctest::Approx(total / count).epsilon(1e-12));
}

TEST_CASE("energy of a single isolated control is its unary term") {
  Points p(1, 3);
  p << 0, 0, 1;
  Points labels(2, 3);
  labels << 0, 0, 1, 0.1, 0, 1;
  labels.row(1).normalize();
  const ControlGrid g = make_control_grid(p, {{}}, {labels});
  CrfParams params = default_crf_params(g);
  params.sigma(0, 0) = 0.1;
  Matrix q(1, 2);
  q << 0.3, 0.7;
  CHECK(crf_energy({0}, {q}, g, params) == doctest::Approx(-std::log(0.3 + 1e-12)).epsilon(1e-14));
  CHECK(crf_energy({1}, {q}, g, params) == doctest::Approx(-std::log(0.7 + 1e-12)).epsilon(1e-14));
}

TEST_CASE("zero compatibility leaves only unary terms") {
  std::mt19937_64 rng(61);
  const ControlGrid g = test::small_ring_grid(4, 3, 0.1, rng);
  CrfParams p = default_crf_params(g);
  p.mu.setZero();
  const Matrix q = random_stochastic(4, 3, rng);
  const std::vector<int> x{0, 2, 1, 1};
  double unary = 0.0;
  for (int i = 0; i < 4; ++i) unary -= std::log(q(i, x[i]) + 1e-12);
  CHECK(crf_energy(x, {q}, g, p) == doctest::Approx(unary).epsilon(1e-14));
}

TEST_CASE("energy matches exhaustive nested-loop oracle on a triangle") {
  std::mt19937_64 rng(62);
  const ControlGrid g = test::small_ring_grid(3, 2, 0.1, rng);
  CrfParams p = default_crf_params(g, 5, 2.5);
  p.mu << 0.0, 1.3, 0.7, 0.0;
  const Matrix q = random_stochastic(3, 2, rng);
  for (int code = 0; code < 8; ++code) {
    const std::vector<int> x{code & 1, (code >> 1) & 1, (code >> 2) & 1};
    CHECK(std::abs(crf_energy(x, {q}, g, p) - oracle_energy(x, q, g, p)) < 1e-12);
  }
  CHECK_THROWS_AS(crf_energy({0, 2, 0}, {q}, g, p), std::out_of_range);
}

TEST_CASE("zero iterations and zero weight are identities") {
  std::mt19937_64 rng(63);
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const Matrix q = random_stochastic(42, 7, rng);
  CrfParams p = default_crf_params(g, 0);
  CHECK((crf_refine({q}, g, p).Q.array() == q.array()).all());
  p = default_crf_params(g, 7, 0.0);
  CHECK((crf_refine({q}, g, p).Q.array() == q.array()).all());
}

TEST_CASE("refinement follows the per-label mean-field oracle and stays stochastic") {
  std::mt19937_64 rng(64);
  const ControlGrid g = test::small_ring_grid(4, 3, 0.1, rng);
  CrfParams p = default_crf_params(g, 6, 4.0);
  const Matrix q0 = random_stochastic(4, 3, rng);
  Matrix expect = q0;
  double worst = 0.0, stochastic = 0.0;
  crf_refine({q0}, g, p, [&](int, const Matrix& q) {
    expect = oracle_step(q0, expect, g, p);
    worst = std::max(worst, test::max_abs(q - expect));
    stochastic = std::max(stochastic, test::max_abs(q.rowwise().sum().array() - 1.0));
  });
  CHECK(worst < 1e-12);
  CHECK(stochastic < 1e-9);
}

TEST_CASE("parameter validation and projection") {
  const ControlGrid g = build_label_sets(0, 1, 1);
  CrfParams p = default_crf_params(g);
  p.iterations = kMaxCrfIterations + 1;
  CHECK_THROWS_AS(validate_crf_params(p, g.num_labels()), std::invalid_argument);
  p = default_crf_params(g);
  p.mu.resize(2, 2);
  CHECK_THROWS_AS(validate_crf_params(p, g.num_labels()), std::invalid_argument);
  p = default_crf_params(g);
  p.weight(0, 0) = -1.0;
  p.sigma(0, 0) = 0.0;
  project_crf_params(p);
  CHECK(p.weight_value() == 0.0);
  CHECK(p.sigma_value() == 1e-3);
}

TEST_CASE("unrolled refinement gradients in Q, mu, sigma and weight") {
  std::mt19937_64 rng(65);
  const ControlGrid g = test::small_ring_grid(4, 3, 0.1, rng);
  const CrfPairTable pairs = CrfPairTable::make(g);
  const Matrix q = random_stochastic(4, 3, rng);
  const Matrix mu = test::random_matrix(3, 3, rng).cwiseAbs();
  const Matrix sigma = Matrix::Constant(1, 1, 0.12);
  const Matrix weight = Matrix::Constant(1, 1, 1.7);
  const double err = test::gradient_mismatch(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        return ad_ops::crf_refine(v[0], v[1], v[2], v[3], 4, pairs);
      },
      {q, mu, sigma, weight}, 7);
  CHECK(err < 1e-5);

  ad::Tape tape;
  const ad::Var out = ad_ops::crf_refine(tape.constant(q), tape.constant(mu), tape.constant(sigma),
                                         tape.constant(weight), 4, pairs);
  CrfParams p;
  p.iterations = 4;
  p.mu = mu;
  p.sigma = sigma;
  p.weight = weight;
  CHECK(test::max_abs(out.value() - crf_refine({q}, g, p).Q) < 1e-14);
}

}  // namespace
}  // namespace sphreg
