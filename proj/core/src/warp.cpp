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

#include "sphreg/warp.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include <unsupported/Eigen/AutoDiff>

#include "sphreg/geometry.hpp"

namespace sphreg {
namespace {

constexpr int kMaxControlDegree = 6;
constexpr int kControlInputs = 3 * (kMaxControlDegree + 1);

using ControlDual = Eigen::AutoDiffScalar<Eigen::Matrix<double, kControlInputs, 1>>;
using PointDual = Eigen::AutoDiffScalar<Eigen::Vector3d>;

template <typename T>
geometry::V3<T> control_rotation_impl(const Vec3& p, const geometry::V3<T>& target,
                                      const std::vector<Vec3>& neighbor_rest,
                                      const std::vector<geometry::V3<T>>& neighbor_moved) {
  using std::atan2;
  using std::cos;
  using std::sin;
  const geometry::V3<T> pc = p.cast<T>();
  const auto q_min = geometry::shortest_arc<T>(pc, target);
  const geometry::V3<T>& u = target;
  T num(0), den(0);
  for (std::size_t k = 0; k < neighbor_rest.size(); ++k) {
    const geometry::V3<T> a = geometry::quat_rotate<T>(q_min, neighbor_rest[k].cast<T>());
    const geometry::V3<T>& b = neighbor_moved[k];
    const geometry::V3<T> ap = a - u * u.dot(a);
    const geometry::V3<T> bp = b - u * u.dot(b);
    num += u.dot(ap.cross(bp));
    den += ap.dot(bp);
  }
  const T half = atan2(num, den) / T(2);
  const geometry::Quat<T> q_spin{cos(half), u * sin(half)};
  return geometry::quat_to_rotation_vector<T>(geometry::quat_mul<T>(q_spin, q_min));
}

struct ControlJacobian {
  Vec3 value;
  Eigen::Matrix<double, 3, kControlInputs> jac;  // columns: [self, neighbors...] x 3
};

ControlJacobian control_rotation_with_jacobian(const ControlGrid& grid, const Points& moved,
                                               std::size_t c) {
  const auto& nb = grid.neighbors[c];
  if (nb.size() > static_cast<std::size_t>(kMaxControlDegree)) {
    throw std::invalid_argument("control point " + std::to_string(c) + " has degree " +
                                std::to_string(nb.size()) + " > " +
                                std::to_string(kMaxControlDegree));
  }
  auto seed = [&](std::size_t row, int slot) {
    geometry::V3<ControlDual> v;
    for (int d = 0; d < 3; ++d) {
      v[d] = ControlDual(moved(static_cast<Eigen::Index>(row), d), kControlInputs, 3 * slot + d);
    }
    return v;
  };
  const auto target = seed(c, 0);
  std::vector<Vec3> rest;
  std::vector<geometry::V3<ControlDual>> now;
  for (std::size_t k = 0; k < nb.size(); ++k) {
    rest.push_back(grid.control_positions.row(nb[k]).transpose());
    now.push_back(seed(static_cast<std::size_t>(nb[k]), static_cast<int>(k) + 1));
  }
  const auto omega = control_rotation_impl<ControlDual>(
      grid.control_positions.row(static_cast<Eigen::Index>(c)).transpose(), target, rest, now);
  ControlJacobian out;
  for (int d = 0; d < 3; ++d) {
    out.value[d] = omega[d].value();
    out.jac.row(d) = omega[d].derivatives().transpose();
  }
  return out;
}

bool control_unmoved(const ControlGrid& grid, const Points& moved, std::size_t c) {
  if (moved.row(static_cast<Eigen::Index>(c)) != grid.control_positions.row(static_cast<Eigen::Index>(c))) return false;
  for (int j : grid.neighbors[c])
    if (moved.row(j) != grid.control_positions.row(j)) return false;
  return true;
}

// Target of vertex v under rotation vector omega, renormalized; d target / d omega.
std::pair<Vec3, Mat3> rotate_vertex(const Vec3& omega, const Vec3& v) {
  if (omega.isZero(0.0)) {
    const Mat3 skew = (Mat3() << 0, v.z(), -v.y(), -v.z(), 0, v.x(), v.y(), -v.x(), 0).finished();
    return {v, skew};
  }
  geometry::V3<PointDual> w;
  for (int d = 0; d < 3; ++d) w[d] = PointDual(omega[d], 3, d);
  geometry::V3<PointDual> r = geometry::rotate_by_vector<PointDual>(w, v.cast<PointDual>());
  const PointDual n = sqrt(r.dot(r));
  r /= n;
  Vec3 value;
  Mat3 jac;
  for (int d = 0; d < 3; ++d) {
    value[d] = r[d].value();
    jac.row(d) = r[d].derivatives().transpose();
  }
  return {value, jac};
}

}  // namespace

DeformationField identity_field(int level) {
  return {level, cached_icosphere(level).vertices()};
}

void validate_field(const DeformationField& field) {
  if (field.mesh_level < 0 || field.mesh_level > kMaxIcosphereLevel) {
    throw std::out_of_range("field level " + std::to_string(field.mesh_level) + " out of range");
  }
  if (static_cast<std::size_t>(field.targets.rows()) != icosphere_vertex_count(field.mesh_level)) {
    throw std::invalid_argument("field has " + std::to_string(field.targets.rows()) +
                                " targets, level " + std::to_string(field.mesh_level) +
                                " has " + std::to_string(icosphere_vertex_count(field.mesh_level)) +
                                " vertices");
  }
  for (Eigen::Index i = 0; i < field.targets.rows(); ++i) {
    const double n = field.targets.row(i).norm();
    if (!(std::abs(n - 1.0) <= 1e-9)) {
      throw std::invalid_argument("field target " + std::to_string(i) + " has norm " +
                                  std::to_string(n));
    }
  }
}

std::shared_ptr<const DensifyPlan> cached_densify_plan(int control_level, int target_level) {
  if (control_level < 0 || target_level < control_level || target_level > kMaxIcosphereLevel) {
    throw std::invalid_argument("densify needs 0 <= control level (" +
                                std::to_string(control_level) + ") <= target level (" +
                                std::to_string(target_level) + ")");
  }
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const DensifyPlan>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find({control_level, target_level});
    if (it != cache.end()) return it->second;
  }
  auto plan = std::make_shared<DensifyPlan>();
  plan->control_level = control_level;
  plan->target_level = target_level;
  const auto& locator = cached_locator(control_level);
  const auto& fine = cached_icosphere(target_level);
  plan->samples.reserve(fine.num_vertices());
  for (std::size_t v = 0; v < fine.num_vertices(); ++v) {
    plan->samples.push_back(locator.locate(fine.vertex(v)));
  }
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(std::make_pair(control_level, target_level), std::move(plan)).first->second;
}

Vec3 control_rotation(const ControlGrid& grid, const Points& moved, std::size_t c) {
  if (control_unmoved(grid, moved, c)) return Vec3::Zero();
  return control_rotation_with_jacobian(grid, moved, c).value;
}

DeformationField densify(const Points& moved, const ControlGrid& grid, int target_level) {
  if (static_cast<std::size_t>(moved.rows()) != grid.num_controls()) {
    throw std::invalid_argument("densify got " + std::to_string(moved.rows()) +
                                " control targets for " + std::to_string(grid.num_controls()) +
                                " control points");
  }
  if (grid.control_level < 0) throw std::invalid_argument("densify needs an icosphere control grid");
  for (Eigen::Index i = 0; i < moved.rows(); ++i) {
    if (!(std::abs(moved.row(i).norm() - 1.0) <= 1e-9)) {
      throw std::invalid_argument("control target " + std::to_string(i) + " is not unit length");
    }
  }
  const auto plan = cached_densify_plan(grid.control_level, target_level);
  ad::Tape tape;
  auto out = ad_ops::densify(tape.constant(moved), grid, *plan);
  return {target_level, out.value()};
}

SphericalSignal warp_signal(const SphericalSignal& moving, const DeformationField& field,
                            const Icosphere& mesh) {
  validate_field(field);
  if (moving.level != mesh.level()) {
    throw std::invalid_argument("moving signal level " + std::to_string(moving.level) +
                                " does not match mesh level " + std::to_string(mesh.level()));
  }
  return {field.mesh_level, barycentric_resample(moving, mesh, field.targets)};
}

DeformationField compose(const DeformationField& first, const DeformationField& second) {
  validate_field(first);
  validate_field(second);
  if (first.mesh_level != second.mesh_level) {
    throw std::invalid_argument("cannot compose fields on levels " +
                                std::to_string(first.mesh_level) + " and " +
                                std::to_string(second.mesh_level));
  }
  const auto& locator = cached_locator(first.mesh_level);
  DeformationField out{first.mesh_level, Points(first.targets.rows(), 3)};
  for (Eigen::Index v = 0; v < first.targets.rows(); ++v) {
    const auto s = locator.locate(first.targets.row(v).transpose());
    Vec3 t = Vec3::Zero();
    for (int k = 0; k < 3; ++k) t += s.weights[k] * second.targets.row(s.corners[k]).transpose();
    // One-hot samples reproduce a stored unit target; leave it untouched.
    if (s.weights.maxCoeff() != 1.0) t.normalize();
    out.targets.row(v) = t.transpose();
  }
  return out;
}

namespace ad_ops {

ad::Var warp(ad::Var values, ad::Var targets, const Icosphere& mesh) {
  if (static_cast<std::size_t>(values.rows()) != mesh.num_vertices()) {
    throw std::invalid_argument("warp source has " + std::to_string(values.rows()) +
                                " rows, mesh has " + std::to_string(mesh.num_vertices()));
  }
  if (targets.cols() != 3) throw std::invalid_argument("warp targets must be N x 3");
  const auto& locator = cached_locator(mesh.level());
  auto samples = std::make_shared<std::vector<BarycentricSample>>();
  samples->reserve(static_cast<std::size_t>(targets.rows()));
  const Matrix& src = values.value();
  Matrix out(targets.rows(), src.cols());
  for (Eigen::Index t = 0; t < targets.rows(); ++t) {
    const auto s = locator.locate(targets.value().row(t).transpose());
    out.row(t) = s.weights[0] * src.row(s.corners[0]) + s.weights[1] * src.row(s.corners[1]) +
                 s.weights[2] * src.row(s.corners[2]);
    samples->push_back(s);
  }
  const FaceLocator* loc = &locator;
  return values.tape()->record(
      std::move(out), {values, targets},
      [values, targets, samples, loc](ad::Tape& t, const Matrix& g) {
        if (t.requires_grad(values)) {
          Matrix gv = Matrix::Zero(values.rows(), values.cols());
          for (std::size_t i = 0; i < samples->size(); ++i) {
            const auto& s = (*samples)[i];
            for (int k = 0; k < 3; ++k)
              gv.row(s.corners[k]) += s.weights[k] * g.row(static_cast<Eigen::Index>(i));
          }
          t.accumulate(values, gv);
        }
        if (t.requires_grad(targets)) {
          Matrix gt(targets.rows(), 3);
          for (std::size_t i = 0; i < samples->size(); ++i) {
            const auto& s = (*samples)[i];
            const auto row = static_cast<Eigen::Index>(i);
            const Vec3 p = targets.value().row(row).transpose();
            const Mat3 jw = loc->weight_jacobian(s, p);
            Vec3 gw;
            for (int k = 0; k < 3; ++k) gw[k] = g.row(row).dot(values.value().row(s.corners[k]));
            gt.row(row) = (jw.transpose() * gw).transpose();
          }
          t.accumulate(targets, gt);
        }
      });
}

ad::Var compose(ad::Var first, ad::Var second, const Icosphere& mesh) {
  return ad::normalize_rows(warp(second, first, mesh));
}

ad::Var densify(ad::Var moved, const ControlGrid& grid, const DensifyPlan& plan) {
  const auto nc = grid.num_controls();
  if (static_cast<std::size_t>(moved.rows()) != nc || moved.cols() != 3) {
    throw std::invalid_argument("densify expects " + std::to_string(nc) + "x3 control targets");
  }
  if (plan.control_level != grid.control_level) {
    throw std::invalid_argument("densify plan level " + std::to_string(plan.control_level) +
                                " does not match control level " +
                                std::to_string(grid.control_level));
  }
  const Points m = moved.value();
  const bool want_grad = moved.tape()->requires_grad(moved);

  std::vector<Vec3> omega(nc, Vec3::Zero());
  auto jac = std::make_shared<std::vector<Eigen::Matrix<double, 3, kControlInputs>>>();
  if (want_grad) jac->resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const bool still = control_unmoved(grid, m, c);
    if (still && !want_grad) continue;
    auto cj = control_rotation_with_jacobian(grid, m, c);
    omega[c] = still ? Vec3::Zero() : cj.value;
    if (want_grad) (*jac)[c] = cj.jac;
  }

  const auto& fine = cached_icosphere(plan.target_level);
  const auto nf = fine.num_vertices();
  Matrix out(static_cast<Eigen::Index>(nf), 3);
  auto point_jac = std::make_shared<std::vector<Mat3>>(want_grad ? nf : 0);
  for (std::size_t v = 0; v < nf; ++v) {
    const auto& s = plan.samples[v];
    Vec3 w = Vec3::Zero();
    for (int k = 0; k < 3; ++k)
      if (s.weights[k] != 0.0) w += s.weights[k] * omega[static_cast<std::size_t>(s.corners[k])];
    auto [target, j] = rotate_vertex(w, fine.vertex(v));
    out.row(static_cast<Eigen::Index>(v)) = target.transpose();
    if (want_grad) (*point_jac)[v] = j;
  }

  const ControlGrid* g = &grid;
  const DensifyPlan* p = &plan;
  return moved.tape()->record(
      std::move(out), {moved}, [moved, g, p, jac, point_jac](ad::Tape& t, const Matrix& go) {
        const auto nc = g->num_controls();
        std::vector<Vec3> g_omega(nc, Vec3::Zero());
        for (std::size_t v = 0; v < p->samples.size(); ++v) {
          const Vec3 gw = (*point_jac)[v].transpose() * go.row(static_cast<Eigen::Index>(v)).transpose();
          const auto& s = p->samples[v];
          for (int k = 0; k < 3; ++k) g_omega[static_cast<std::size_t>(s.corners[k])] += s.weights[k] * gw;
        }
        Matrix gm = Matrix::Zero(static_cast<Eigen::Index>(nc), 3);
        for (std::size_t c = 0; c < nc; ++c) {
          const Eigen::Matrix<double, kControlInputs, 1> gin = (*jac)[c].transpose() * g_omega[c];
          gm.row(static_cast<Eigen::Index>(c)) += gin.segment<3>(0).transpose();
          const auto& nb = g->neighbors[c];
          for (std::size_t k = 0; k < nb.size(); ++k)
            gm.row(nb[k]) += gin.segment<3>(3 * static_cast<Eigen::Index>(k + 1)).transpose();
        }
        t.accumulate(moved, gm);
      });
}

}  // namespace ad_ops
}  // namespace sphreg
