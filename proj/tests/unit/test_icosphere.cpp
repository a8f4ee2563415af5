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
#include <set>
#include <utility>

#include "sphreg/icosphere.hpp"
#include "test_util.hpp"

namespace sphreg {
namespace {

TEST_CASE("icosphere counts follow the closed forms") {
  const Icosphere& l0 = cached_icosphere(0);
  CHECK(l0.num_vertices() == 12);
  CHECK(l0.num_faces() == 20);
  CHECK(l0.num_edges() == 30);
  const Icosphere& l3 = cached_icosphere(3);
  CHECK(l3.num_vertices() == 642);
  CHECK(l3.num_faces() == 1280);
  CHECK(static_cast<long>(l3.num_vertices()) - static_cast<long>(l3.num_edges()) +
            static_cast<long>(l3.num_faces()) ==
        2);
  CHECK(cached_icosphere(6).num_vertices() == 40962);
  for (int level = 0; level <= 5; ++level) {
    const Icosphere& m = cached_icosphere(level);
    CHECK(m.num_vertices() == icosphere_vertex_count(level));
    CHECK(m.num_faces() == icosphere_face_count(level));
    CHECK(m.num_edges() == icosphere_edge_count(level));
  }
}

TEST_CASE("icosphere rejects levels outside the supported range") {
  CHECK_THROWS_AS(generate_icosphere(-1), std::out_of_range);
  CHECK_THROWS_AS(generate_icosphere(kMaxIcosphereLevel + 1), std::out_of_range);
}

TEST_CASE("base orientation puts the poles at +z and -z") {
  const Icosphere& m = cached_icosphere(0);
  CHECK(m.vertex(0).isApprox(Vec3(0, 0, 1)));
  CHECK(m.vertex(11).isApprox(Vec3(0, 0, -1)));
}

TEST_CASE("vertices are unit length and faces are outward oriented") {
  for (int level = 0; level <= 4; ++level) {
    const Icosphere& m = cached_icosphere(level);
    for (std::size_t i = 0; i < m.num_vertices(); ++i) CHECK(std::abs(m.vertex(i).norm() - 1.0) < 1e-14);
    for (const Face& f : m.faces()) {
      const Vec3 a = m.vertex(f[0]), b = m.vertex(f[1]), c = m.vertex(f[2]);
      CHECK((b - a).cross(c - a).dot(a + b + c) > 0.0);
    }
  }
}

TEST_CASE("prefix property holds for adjacent levels 0..6") {
  for (int level = 0; level < 6; ++level) {
    const Icosphere& coarse = cached_icosphere(level);
    const Icosphere& fine = cached_icosphere(level + 1);
    const double err = test::max_abs(fine.vertices().topRows(coarse.num_vertices()) - coarse.vertices());
    CHECK(err <= 1e-12);
  }
}

TEST_CASE("one-rings are symmetric and match the face edges") {
  const Icosphere& m = cached_icosphere(2);
  std::set<std::pair<int, int>> edges;
  for (const Face& f : m.faces()) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  std::size_t ring_total = 0;
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    for (int j : m.one_ring(i)) {
      CHECK(edges.count({std::min<int>(i, j), std::max<int>(i, j)}) == 1);
      const auto& back = m.one_ring(j);
      CHECK(std::find(back.begin(), back.end(), static_cast<int>(i)) != back.end());
    }
    ring_total += m.one_ring(i).size();
  }
  CHECK(ring_total == 2 * edges.size());
}

TEST_CASE("generation is deterministic") {
  const Icosphere a = generate_icosphere(3);
  const Icosphere b = generate_icosphere(3);
  CHECK((a.vertices().array() == b.vertices().array()).all());
  CHECK(a.faces() == b.faces());
}

TEST_CASE("face locator finds a containing face with non-negative weights") {
  std::mt19937_64 rng(3);
  const FaceLocator& loc = cached_locator(3);
  for (int t = 0; t < 500; ++t) {
    const Vec3 p = test::random_unit(rng);
    const BarycentricSample s = loc.locate(p);
    REQUIRE(s.face >= 0);
    CHECK(s.weights.minCoeff() >= -1e-12);
    CHECK(std::abs(s.weights.sum() - 1.0) < 1e-12);
    // Central projection: p is parallel to the weighted corner combination.
    const Icosphere& m = loc.mesh();
    Vec3 q = Vec3::Zero();
    for (int k = 0; k < 3; ++k) q += s.weights[k] * m.vertex(s.corners[k]);
    CHECK(q.normalized().cross(p).norm() < 1e-12);
  }
}

TEST_CASE("barycentric resample identity and constants") {
  const Icosphere& m = cached_icosphere(2);
  std::mt19937_64 rng(4);
  SphericalSignal s{2, test::random_matrix(m.num_vertices(), 3, rng)};
  const Matrix same = barycentric_resample(s, m, m.vertices());
  CHECK((same.array() == s.values.array()).all());

  SphericalSignal c{2, Matrix::Constant(m.num_vertices(), 1, 2.5)};
  Points targets(200, 3);
  for (int i = 0; i < 200; ++i) targets.row(i) = test::random_unit(rng).transpose();
  const Matrix out = barycentric_resample(c, m, targets);
  CHECK(test::max_abs(out.array() - 2.5) < 1e-12);
}

TEST_CASE("barycentric resample reproduces linear functions from level 4") {
  const Icosphere& src = cached_icosphere(4);
  const Icosphere& dst = cached_icosphere(3);
  SphericalSignal s{4, Matrix(src.num_vertices(), 3)};
  s.values.col(0) = src.vertices().col(2);
  s.values.col(1) = src.vertices().col(0) - 2.0 * src.vertices().col(1);
  s.values.col(2) = Vector::Constant(src.num_vertices(), 0.3) + src.vertices().col(1);
  std::mt19937_64 rng(5);
  Points targets(dst.num_vertices() + 300, 3);
  targets.topRows(dst.num_vertices()) = dst.vertices();
  for (int i = 0; i < 300; ++i) targets.row(dst.num_vertices() + i) = test::random_unit(rng).transpose();
  const Matrix out = barycentric_resample(s, src, targets);
  Matrix expected(targets.rows(), 3);
  expected.col(0) = targets.col(2);
  expected.col(1) = targets.col(0) - 2.0 * targets.col(1);
  expected.col(2) = Vector::Constant(targets.rows(), 0.3) + targets.col(1);
  CHECK(test::max_abs(out - expected) < 5e-3);
}

TEST_CASE("down and up sampling use the prefix rows") {
  std::mt19937_64 rng(6);
  SphericalSignal s{2, test::random_matrix(162, 2, rng)};
  const SphericalSignal d = downsample_to_level(s, 1);
  CHECK(d.level == 1);
  CHECK((d.values.array() == s.values.topRows(42).array()).all());

  SphericalSignal c{1, test::random_matrix(42, 2, rng)};
  const SphericalSignal up = upsample_to_level(c, 3);
  CHECK(up.rows() == 642);
  CHECK((downsample_to_level(up, 1).values.array() == c.values.array()).all());

  SphericalSignal k{0, Matrix::Constant(12, 1, -1.25)};
  CHECK(test::max_abs(upsample_to_level(k, 3).values.array() + 1.25) < 1e-12);

  CHECK_THROWS_AS(downsample_to_level(s, 3), std::invalid_argument);
  CHECK_THROWS_AS(upsample_to_level(s, 1), std::invalid_argument);
}

TEST_CASE("signal validation") {
  SphericalSignal wrong{1, Matrix::Zero(40, 1)};
  CHECK_THROWS_AS(validate_signal(wrong), std::invalid_argument);
  SphericalSignal bad{0, Matrix::Zero(12, 1)};
  bad.values(3, 0) = std::nan("");
  CHECK_THROWS_AS(validate_signal(bad), NumericError);
}

}  // namespace
}  // namespace sphreg
