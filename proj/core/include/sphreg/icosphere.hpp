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

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sphreg/common.hpp"

namespace sphreg {

inline constexpr int kMaxIcosphereLevel = 7;

constexpr std::size_t icosphere_vertex_count(int level) {
  return 10 * (std::size_t{1} << (2 * level)) + 2;
}
constexpr std::size_t icosphere_face_count(int level) {
  return 20 * (std::size_t{1} << (2 * level));
}
constexpr std::size_t icosphere_edge_count(int level) {
  return 30 * (std::size_t{1} << (2 * level));
}

using Face = std::array<int, 3>;

// Recursively subdivided icosahedron on the unit sphere.
//
// Vertex ordering is canonical: level 0 has the poles at +z (index 0) and -z
// (index 11) with two staggered rings of five between them, and each
// subdivision appends the edge midpoints after all parent vertices. Hence the
// vertices of level k are exactly the first 10*4^k+2 vertices of level k+1.
// Faces are oriented counter-clockwise seen from outside.
class Icosphere {
 public:
  Icosphere(int level, Points vertices, std::vector<Face> faces);

  int level() const { return level_; }
  std::size_t num_vertices() const { return static_cast<std::size_t>(vertices_.rows()); }
  std::size_t num_faces() const { return faces_.size(); }
  std::size_t num_edges() const;

  const Points& vertices() const { return vertices_; }
  Vec3 vertex(std::size_t i) const { return vertices_.row(static_cast<Eigen::Index>(i)).transpose(); }
  const std::vector<Face>& faces() const { return faces_; }
  // Sorted one-ring neighbor indices of vertex i.
  const std::vector<int>& one_ring(std::size_t i) const { return one_ring_[i]; }
  const std::vector<std::vector<int>>& one_rings() const { return one_ring_; }
  // Faces incident to vertex i.
  const std::vector<int>& incident_faces(std::size_t i) const { return incident_faces_[i]; }

  // Largest great-circle length over all edges (radians).
  double max_edge_arc() const;
  double mean_edge_arc() const;

 private:
  int level_;
  Points vertices_;
  std::vector<Face> faces_;
  std::vector<std::vector<int>> one_ring_;
  std::vector<std::vector<int>> incident_faces_;
};

// Throws std::out_of_range outside [0, kMaxIcosphereLevel].
Icosphere generate_icosphere(int level);

// Shared, lazily built meshes; construction happens once per level.
const Icosphere& cached_icosphere(int level);

// Per-vertex, multi-channel values bound to an icosphere level.
struct SphericalSignal {
  int level = 0;
  Matrix values;  // N x C

  std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
};

// Checks the row count against the level and that every value is finite.
void validate_signal(const SphericalSignal& signal);

// Location of a point inside a mesh triangle with its interpolation weights.
struct BarycentricSample {
  int face = -1;
  std::array<int, 3> corners{};
  Vec3 weights = Vec3::Zero();
};

// Point location on an icosphere by central projection onto planar
// triangles. Weights are x / sum(x) where [a b c] x = p.
class FaceLocator {
 public:
  explicit FaceLocator(const Icosphere& mesh);

  const Icosphere& mesh() const { return *mesh_; }

  // `p` must be unit length. A point that coincides bit-for-bit with a mesh
  // vertex gets a one-hot weight on that vertex.
  BarycentricSample locate(const Vec3& p) const;

  // Derivative of the three weights of `sample` with respect to p (3 x 3,
  // row k = d w_k / d p) with the containing face held fixed.
  Mat3 weight_jacobian(const BarycentricSample& sample, const Vec3& p) const;

 private:
  int nearest_vertex(const Vec3& p) const;
  bool try_face(int face, const Vec3& p, double& min_coord) const;

  const Icosphere* mesh_;
  std::vector<Mat3> inverse_corners_;
};

// Shared locator for the cached mesh of `level`.
const FaceLocator& cached_locator(int level);

// Samples `signal` (bound to `src`) at every row of `targets`.
Matrix barycentric_resample(const SphericalSignal& signal, const Icosphere& src,
                            const Points& targets);

SphericalSignal downsample_to_level(const SphericalSignal& signal, int dst_level);
SphericalSignal upsample_to_level(const SphericalSignal& signal, int dst_level);

}  // namespace sphreg
