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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "sphreg/discrete_reg.hpp"
#include "test_util.hpp"

namespace sphreg {
namespace {

UNetConfig desk_config(LabelHead head) {
  UNetConfig c;
  c.mesh_level = 2;
  c.bandwidth = 8;
  c.channels = 4;
  c.heads = 4;
  c.label_head = head;
  c.match_dim = 3;
  return c;
}

// Rotation vector from p to q via acos, independent of the library helper.
Vec3 oracle_log(const Vec3& p, const Vec3& q) {
  const Vec3 axis = p.cross(q);
  if (axis.norm() == 0.0) return Vec3::Zero();
  return axis.normalized() * std::acos(std::clamp(p.dot(q), -1.0, 1.0));
}

Vec3 oracle_exp(const Vec3& r, const Vec3& v) {
  const double theta = r.norm();
  if (theta == 0.0) return v;
  return test::axis_angle_matrix(r / theta, theta) * v;
}

Matrix random_stochastic(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Matrix q = test::random_matrix(rows, cols, rng).array().exp();
  for (Eigen::Index r = 0; r < rows; ++r) q.row(r) /= q.row(r).sum();
  return q;
}

TEST_CASE("label sets of degree-6 controls are the control plus its one-ring") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const Icosphere& label_mesh = cached_icosphere(2);
  CHECK(g.num_controls() == 42);
  CHECK(g.num_labels() == 7);
  int checked = 0;
  for (std::size_t c = 0; c < 42; ++c) {
    CHECK(g.labels(c, 0) == static_cast<int>(c));
    CHECK((g.label_positions[c].row(0).array() == g.control_positions.row(c).array()).all());
    if (label_mesh.one_ring(c).size() != 6) continue;
    std::set<int> expect(label_mesh.one_ring(c).begin(), label_mesh.one_ring(c).end());
    expect.insert(static_cast<int>(c));
    std::set<int> got;
    for (int j = 0; j < 7; ++j) got.insert(g.labels(c, j));
    CHECK(got == expect);
    ++checked;
  }
  CHECK(checked == 30);
}

TEST_CASE("labels lie within hops times the longest label edge") {
  for (int hops : {1, 2, 3}) {
    const ControlGrid g = build_label_sets(1, 3, hops);
    const double limit = hops * cached_icosphere(3).max_edge_arc() + 1e-12;
    for (std::size_t c = 0; c < g.num_controls(); ++c) {
      const Vec3 p = g.control_positions.row(c).transpose();
      for (Eigen::Index j = 0; j < g.label_positions[c].rows(); ++j) {
        const Vec3 q = g.label_positions[c].row(j).transpose();
        CHECK(std::atan2(p.cross(q).norm(), p.dot(q)) <= limit);
      }
    }
  }
}

TEST_CASE("non-identity slots wind counter-clockwise around the control") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  for (std::size_t c = 0; c < g.num_controls(); ++c) {
    const Vec3 p = g.control_positions.row(c).transpose();
    const Vec3 first = g.label_positions[c].row(1).transpose();
    const Vec3 e1 = (first - first.dot(p) * p).normalized();
    const Vec3 e2 = p.cross(e1);
    double prev = -1.0;
    for (Eigen::Index j = 1; j < 7; ++j) {
      const Vec3 q = g.label_positions[c].row(j).transpose();
      double ang = std::atan2(q.dot(e2), q.dot(e1));
      if (ang < -1e-12) ang += 2.0 * std::numbers::pi;
      CHECK(ang > prev);
      prev = ang;
    }
  }
}

TEST_CASE("label rotations carry each control to its labels") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  for (std::size_t c = 0; c < g.num_controls(); ++c) {
    const Vec3 p = g.control_positions.row(c).transpose();
    for (int j = 0; j < 7; ++j) {
      const Vec3 r = g.label_rotations[c].row(j).transpose();
      CHECK((oracle_exp(r, p) - g.label_positions[c].row(j).transpose()).norm() < 1e-12);
    }
  }
}

TEST_CASE("label set argument checks") {
  CHECK_THROWS_AS(build_label_sets(2, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_label_sets(1, 2, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_label_sets(1, 2, 1, 7), std::invalid_argument);
  Points p(1, 3);
  p << 0, 0, 1;
  Points wrong(2, 3);
  wrong << 1, 0, 0, 0, 1, 0;
  CHECK_THROWS_AS(make_control_grid(p, {{}}, {wrong}), std::invalid_argument);
}

TEST_CASE("probabilities") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const auto uniform = predict_probabilities(Matrix::Zero(162, 7), g);
  CHECK(uniform.Q.rows() == 42);
  CHECK(test::max_abs(uniform.Q.array() - 1.0 / 7.0) < 1e-15);

  Matrix logits = Matrix::Zero(42, 7);
  logits(5, 3) = 50.0;
  CHECK(predict_probabilities(logits, g).Q(5, 3) > 1.0 - 1e-9);

  std::mt19937_64 rng(51);
  const auto q = predict_probabilities(test::random_matrix(42, 7, rng, 3.0), g);
  CHECK(test::max_abs(q.Q.rowwise().sum().array() - 1.0) < 1e-12);

  logits(0, 0) = std::nan("");
  CHECK_THROWS_AS(predict_probabilities(logits, g), NumericError);
  CHECK_THROWS_AS(predict_probabilities(Matrix::Zero(42, 6), g), std::invalid_argument);
}

TEST_CASE("argmax deformation") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const Matrix uniform = Matrix::Constant(42, 7, 1.0 / 7.0);
  CHECK((argmax_deformation({uniform}, g).array() == g.control_positions.array()).all());

  std::mt19937_64 rng(52);
  for (int t = 0; t < 20; ++t) {
    const Matrix q = random_stochastic(42, 7, rng);
    const Points d = argmax_deformation({q}, g);
    for (Eigen::Index c = 0; c < 42; ++c) {
      int best = 0;
      for (int j = 0; j < 7; ++j)
        if (q(c, j) > q(c, best)) best = j;
      CHECK((d.row(c).array() == g.label_positions[c].row(best).array()).all());
    }
  }
}

TEST_CASE("soft deformation matches the rotation-vector oracle") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  std::mt19937_64 rng(53);
  const Matrix q = random_stochastic(42, 7, rng);
  const Points d = soft_deformation({q}, g);
  for (Eigen::Index c = 0; c < 42; ++c) {
    const Vec3 p = g.control_positions.row(c).transpose();
    Vec3 weighted = Vec3::Zero(), mean = Vec3::Zero();
    for (int j = 0; j < 7; ++j) {
      const Vec3 rho = oracle_log(p, g.label_positions[c].row(j).transpose());
      weighted += q(c, j) * rho;
      mean += rho / 7.0;
    }
    const double kappa = 7.0 / 6.0 * (1.0 - q.row(c).squaredNorm());
    const Vec3 expect = oracle_exp(weighted - kappa * mean, p);
    CHECK((d.row(c).transpose() - expect).norm() < 1e-10);
  }
}

TEST_CASE("soft deformation agrees with argmax on one-hot rows and is identity on uniform rows") {
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  Matrix onehot = Matrix::Zero(42, 7);
  for (int c = 0; c < 42; ++c) onehot(c, c % 7) = 1.0;
  CHECK((soft_deformation({onehot}, g).array() == argmax_deformation({onehot}, g).array()).all());
  const Matrix uniform = Matrix::Constant(42, 7, 1.0 / 7.0);
  CHECK((soft_deformation({uniform}, g).array() == g.control_positions.array()).all());
}

TEST_CASE("soft deformation gradient") {
  const ControlGrid g = build_label_sets(0, 1, 1);
  std::mt19937_64 rng(54);
  const Matrix q = random_stochastic(12, 6, rng);
  const double err = test::gradient_mismatch(
      [&](ad::Tape&, const std::vector<ad::Var>& v) { return ad_ops::soft_deformation(v[0], g); },
      {q}, 5);
  CHECK(err < 1e-6);
}

TEST_CASE("matching logits correlate queries with keys sampled at the labels") {
  const UNetConfig cfg = desk_config(LabelHead::kMatching);
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const LabelReadout readout = LabelReadout::make(g, 2, cfg.match_dim);
  std::mt19937_64 rng(55);
  const Matrix head = test::random_matrix(162, 2 * cfg.match_dim, rng);
  const Matrix logits = label_logits(head, g, cfg, &readout);
  REQUIRE(logits.rows() == 42);
  const Icosphere& mesh = cached_icosphere(2);
  const SphericalSignal keys{2, head.rightCols(cfg.match_dim)};
  double err = 0.0;
  for (Eigen::Index c = 0; c < 42; ++c) {
    const Matrix sampled = barycentric_resample(keys, mesh, g.label_positions[c]);
    for (int j = 0; j < 7; ++j) {
      const double expect = head.row(c).head(cfg.match_dim).dot(sampled.row(j)) / std::sqrt(3.0);
      err = std::max(err, std::abs(logits(c, j) - expect));
    }
  }
  CHECK(err < 1e-12);
  CHECK_THROWS_AS(label_logits(head, g, cfg, nullptr), std::invalid_argument);

  const double grad_err = test::gradient_mismatch(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        return ad_ops::label_logits(v[0], g, cfg, &readout);
      },
      {head}, 6, 1e-6, 1e-3);
  CHECK(grad_err < 1e-5);
}

TEST_CASE("direct head logits are the prefix rows") {
  const UNetConfig cfg = desk_config(LabelHead::kDirect);
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  std::mt19937_64 rng(56);
  const Matrix head = test::random_matrix(162, 7, rng);
  CHECK((label_logits(head, g, cfg, nullptr).array() == head.topRows(42).array()).all());
}

TEST_CASE("network output shape, zero head and determinism") {
  std::mt19937_64 rng(57);
  UNetConfig cfg;  // level 3, L = 16, C = 8
  cfg.label_head = LabelHead::kDirect;
  UNetParams params = init_unet(cfg, rng);
  const UNetBases bases = UNetBases::make(cfg.mesh_level, cfg.bandwidth);
  const SphericalSignal m{3, test::random_matrix(642, 1, rng)};
  const SphericalSignal f{3, test::random_matrix(642, 1, rng)};
  const Matrix out = unet_forward(m, f, params, bases);
  CHECK(out.rows() == 642);
  CHECK(out.cols() == 7);
  const ControlGrid g = build_label_sets(1, 2, 2, 7);
  const auto probs = predict_probabilities(label_logits(out, g, cfg, nullptr), g);
  CHECK(test::max_abs(probs.Q.array() - 1.0 / 7.0) < 1e-15);
  const Matrix again = unet_forward(m, f, params, bases);
  CHECK((again.array() == out.array()).all());

  UNetConfig mcfg = desk_config(LabelHead::kMatching);
  std::mt19937_64 rng2(58);
  UNetParams mparams = init_unet(mcfg, rng2);
  const UNetBases mbases = UNetBases::make(2, 8);
  const SphericalSignal m2{2, test::random_matrix(162, 1, rng2)};
  const SphericalSignal f2{2, test::random_matrix(162, 1, rng2)};
  const Matrix mout = unet_forward(m2, f2, mparams, mbases);
  CHECK(mout.cols() == 2 * mcfg.match_dim);
  const LabelReadout readout = LabelReadout::make(g, 2, mcfg.match_dim);
  const Matrix logits = label_logits(mout, g, mcfg, &readout);
  CHECK(test::max_abs(logits) == 0.0);
}

TEST_CASE("network configuration checks") {
  UNetConfig c = desk_config(LabelHead::kMatching);
  c.bandwidth = 6;
  CHECK_THROWS_AS(validate_unet_config(c), std::invalid_argument);
  c = desk_config(LabelHead::kMatching);
  c.heads = 3;
  CHECK_THROWS_AS(validate_unet_config(c), std::invalid_argument);
  c = desk_config(LabelHead::kMatching);
  c.mesh_level = 1;
  CHECK_THROWS_AS(validate_unet_config(c), std::invalid_argument);
}

}  // namespace
}  // namespace sphreg
