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

#include "sphreg/icosphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>

namespace sphreg {
namespace {

Points base_vertices() {
  Points v(12, 3);
  const double z = 1.0 / std::sqrt(5.0);
  const double r = 2.0 / std::sqrt(5.0);
  v.row(0) << 0.0, 0.0, 1.0;
  for (int k = 0; k < 5; ++k) {
    const double upper = 2.0 * std::numbers::pi * k / 5.0;
    const double lower = upper + std::numbers::pi / 5.0;
    v.row(1 + k) << r * std::cos(upper), r * std::sin(upper), z;
    v.row(6 + k) << r * std::cos(lower), r * std::sin(lower), -z;
  }
  v.row(11) << 0.0, 0.0, -1.0;
  return v;
}

std::vector<Face> base_faces() {
  std::vector<Face> f;
  for (int k = 0; k < 5; ++k) {
    const int u0 = 1 + k, u1 = 1 + (k + 1) % 5;
    const int l0 = 6 + k, l1 = 6 + (k + 1) % 5;
    f.push_back({0, u0, u1});
    f.push_back({u0, l0, u1});
    f.push_back({l0, l1, u1});
    f.push_back({11, l1, l0});
  }
  return f;
}

void orient_outward(const Points& v, std::vector<Face>& faces) {
  for (auto& f : faces) {
    const Vec3 a = v.row(f[0]), b = v.row(f[1]), c = v.row(f[2]);
    if ((b - a).cross(c - a).dot(a + b + c) < 0.0) std::swap(f[1], f[2]);
  }
}

}  // namespace

Icosphere::Icosphere(int level, Points vertices, std::vector<Face> faces)
    : level_(level), vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const auto n = num_vertices();
  one_ring_.assign(n, {});
  incident_faces_.assign(n, {});
  for (std::size_t fi = 0; fi < faces_.size(); ++fi) {
    const auto& f = faces_[fi];
    for (int k = 0; k < 3; ++k) {
      incident_faces_[f[k]].push_back(static_cast<int>(fi));
      one_ring_[f[k]].push_back(f[(k + 1) % 3]);
      one_ring_[f[k]].push_back(f[(k + 2) % 3]);
    }
  }
  for (auto& ring : one_ring_) {
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  }
}

std::size_t Icosphere::num_edges() const {
  std::size_t twice = 0;
  for (const auto& ring : one_ring_) twice += ring.size();
  return twice / 2;
}

double Icosphere::max_edge_arc() const {
  double best = 0.0;
  for (std::size_t i = 0; i < num_vertices(); ++i)
    for (int j : one_ring_[i]) {
      const double d = std::clamp(vertex(i).dot(vertex(j)), -1.0, 1.0);
      best = std::max(best, std::acos(d));
    }
  return best;
}

double Icosphere::mean_edge_arc() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < num_vertices(); ++i)
    for (int j : one_ring_[i]) {
      if (static_cast<std::size_t>(j) < i) continue;
      sum += std::acos(std::clamp(vertex(i).dot(vertex(j)), -1.0, 1.0));
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

Icosphere generate_icosphere(int level) {
  if (level < 0 || level > kMaxIcosphereLevel) {
    throw std::out_of_range("icosphere level " + std::to_string(level) +
                            " outside supported range [0, " +
                            std::to_string(kMaxIcosphereLevel) + "]");
  }
  Points vertices = base_vertices();
  std::vector<Face> faces = base_faces();
  orient_outward(vertices, faces);

  for (int l = 0; l < level; ++l) {
    const auto n_old = static_cast<std::size_t>(vertices.rows());
    const std::size_t n_new = icosphere_vertex_count(l + 1);
    Points next(n_new, 3);
    next.topRows(n_old) = vertices;
    std::size_t cursor = n_old;
    std::unordered_map<std::uint64_t, int> midpoint;
    midpoint.reserve(icosphere_edge_count(l));
    auto mid = [&](int a, int b) {
      const auto key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) |
                       static_cast<std::uint64_t>(std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3 m = (next.row(a) + next.row(b)).transpose().normalized();
      next.row(static_cast<Eigen::Index>(cursor)) = m.transpose();
      const int idx = static_cast<int>(cursor++);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> refined;
    refined.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      refined.push_back({f[0], ab, ca});
      refined.push_back({f[1], bc, ab});
      refined.push_back({f[2], ca, bc});
      refined.push_back({ab, bc, ca});
    }
    vertices = std::move(next);
    faces = std::move(refined);
  }
  return Icosphere(level, std::move(vertices), std::move(faces));
}

const Icosphere& cached_icosphere(int level) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Icosphere>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[level];
  if (!slot) slot = std::make_unique<Icosphere>(generate_icosphere(level));
  return *slot;
}

void validate_signal(const SphericalSignal& signal) {
  if (signal.level < 0 || signal.level > kMaxIcosphereLevel) {
    throw std::out_of_range("signal level " + std::to_string(signal.level) + " out of range");
  }
  if (signal.rows() != icosphere_vertex_count(signal.level)) {
    throw std::invalid_argument("signal has " + std::to_string(signal.rows()) +
                                " rows but level " + std::to_string(signal.level) + " has " +
                                std::to_string(icosphere_vertex_count(signal.level)) +
                                " vertices");
  }
  if (signal.values.cols() < 1) throw std::invalid_argument("signal has no channels");
  if (!signal.values.allFinite()) throw NumericError("signal contains non-finite values");
}

FaceLocator::FaceLocator(const Icosphere& mesh) : mesh_(&mesh) {
  inverse_corners_.reserve(mesh.num_faces());
  for (const auto& f : mesh.faces()) {
    Mat3 m;
    m.col(0) = mesh.vertex(f[0]);
    m.col(1) = mesh.vertex(f[1]);
    m.col(2) = mesh.vertex(f[2]);
    inverse_corners_.push_back(m.inverse());
  }
}

int FaceLocator::nearest_vertex(const Vec3& p) const {
  const auto& v = mesh_->vertices();
  int best = 0;
  double best_dot = -2.0;
  // The first 12 vertices form the base icosahedron at every level.
  for (int i = 0; i < 12; ++i) {
    const double d = v.row(i).dot(p.transpose());
    if (d > best_dot) {
      best_dot = d;
      best = i;
    }
  }
  for (bool moved = true; moved;) {
    moved = false;
    for (int j : mesh_->one_ring(static_cast<std::size_t>(best))) {
      const double d = v.row(j).dot(p.transpose());
      if (d > best_dot) {
        best_dot = d;
        best = j;
        moved = true;
      }
    }
  }
  return best;
}

bool FaceLocator::try_face(int face, const Vec3& p, double& min_coord) const {
  const Vec3 x = inverse_corners_[static_cast<std::size_t>(face)] * p;
  min_coord = x.minCoeff();
  return min_coord >= -1e-12 && x.sum() > 0.0;
}

BarycentricSample FaceLocator::locate(const Vec3& p) const {
  const int seed = nearest_vertex(p);
  BarycentricSample out;

  auto finish = [&](int face) {
    const auto& f = mesh_->faces()[static_cast<std::size_t>(face)];
    out.face = face;
    out.corners = f;
    const Vec3 x = inverse_corners_[static_cast<std::size_t>(face)] * p;
    out.weights = x / x.sum();
    for (int k = 0; k < 3; ++k) {
      if (f[k] == seed && mesh_->vertex(static_cast<std::size_t>(seed)) == p) {
        out.weights = Vec3::Zero();
        out.weights[k] = 1.0;
      }
    }
    return out;
  };

  double min_coord = 0.0;
  for (int f : mesh_->incident_faces(static_cast<std::size_t>(seed)))
    if (try_face(f, p, min_coord)) return finish(f);
  for (int nb : mesh_->one_ring(static_cast<std::size_t>(seed)))
    for (int f : mesh_->incident_faces(static_cast<std::size_t>(nb)))
      if (try_face(f, p, min_coord)) return finish(f);

  int best = -1;
  double best_min = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < mesh_->num_faces(); ++f) {
    const Vec3 x = inverse_corners_[f] * p;
    if (x.sum() <= 0.0) continue;
    if (x.minCoeff() > best_min) {
      best_min = x.minCoeff();
      best = static_cast<int>(f);
    }
  }
  if (best < 0 || best_min < -1e-9) {
    throw std::logic_error("face location failed for point (" + std::to_string(p.x()) + ", " +
                           std::to_string(p.y()) + ", " + std::to_string(p.z()) + ")");
  }
  return finish(best);
}

Mat3 FaceLocator::weight_jacobian(const BarycentricSample& sample, const Vec3& p) const {
  const Mat3& inv = inverse_corners_[static_cast<std::size_t>(sample.face)];
  const Vec3 x = inv * p;
  const double s = x.sum();
  const Vec3 w = x / s;
  // dw = (dx - w * 1^T dx) / s with dx = inv * dp.
  const Mat3 proj = Mat3::Identity() - w * Vec3::Ones().transpose();
  return proj * inv / s;
}

const FaceLocator& cached_locator(int level) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<FaceLocator>> cache;
  const Icosphere& mesh = cached_icosphere(level);
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[level];
  if (!slot) slot = std::make_unique<FaceLocator>(mesh);
  return *slot;
}

Matrix barycentric_resample(const SphericalSignal& signal, const Icosphere& src,
                            const Points& targets) {
  validate_signal(signal);
  if (signal.level != src.level()) {
    throw std::invalid_argument("signal level " + std::to_string(signal.level) +
                                " does not match source mesh level " +
                                std::to_string(src.level()));
  }
  for (Eigen::Index t = 0; t < targets.rows(); ++t) {
    const double n = targets.row(t).norm();
    if (!(std::abs(n - 1.0) <= 1e-9)) {
      throw std::invalid_argument("resample target " + std::to_string(t) +
                                  " is not unit length (norm " + std::to_string(n) + ")");
    }
  }
  const FaceLocator locator(src);
  Matrix out(targets.rows(), signal.values.cols());
  for (Eigen::Index t = 0; t < targets.rows(); ++t) {
    const auto s = locator.locate(targets.row(t).transpose());
    out.row(t) = s.weights[0] * signal.values.row(s.corners[0]) +
                 s.weights[1] * signal.values.row(s.corners[1]) +
                 s.weights[2] * signal.values.row(s.corners[2]);
  }
  return out;
}

SphericalSignal downsample_to_level(const SphericalSignal& signal, int dst_level) {
  validate_signal(signal);
  if (dst_level < 0 || dst_level >= signal.level) {
    throw std::invalid_argument("downsample target level " + std::to_string(dst_level) +
                                " must be in [0, " + std::to_string(signal.level) + ")");
  }
  const auto n = static_cast<Eigen::Index>(icosphere_vertex_count(dst_level));
  return {dst_level, signal.values.topRows(n)};
}

SphericalSignal upsample_to_level(const SphericalSignal& signal, int dst_level) {
  validate_signal(signal);
  if (dst_level <= signal.level || dst_level > kMaxIcosphereLevel) {
    throw std::invalid_argument("upsample target level " + std::to_string(dst_level) +
                                " must be in (" + std::to_string(signal.level) + ", " +
                                std::to_string(kMaxIcosphereLevel) + "]");
  }
  const Icosphere& src = cached_icosphere(signal.level);
  const Icosphere& dst = cached_icosphere(dst_level);
  return {dst_level, barycentric_resample(signal, src, dst.vertices())};
}

}  // namespace sphreg
