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

#include "sphreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>

namespace sphreg {

namespace {

struct Centered {
  Vector a, b;
  double saa, sbb, sab;
};

Centered center(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("correlation needs two equally sized vectors of length >= 2");
  }
  Centered c;
  c.a = a.array() - a.mean();
  c.b = b.array() - b.mean();
  c.saa = c.a.squaredNorm();
  c.sbb = c.b.squaredNorm();
  c.sab = c.a.dot(c.b);
  if (!(c.saa > 0.0)) throw std::invalid_argument("pearson_cc: first input has zero variance");
  if (!(c.sbb > 0.0)) throw std::invalid_argument("pearson_cc: second input has zero variance");
  return c;
}

void check_pair(const SphericalSignal& a, const SphericalSignal& b) {
  validate_signal(a);
  validate_signal(b);
  if (a.level != b.level) {
    throw std::invalid_argument("signals on different levels " + std::to_string(a.level) +
                                " and " + std::to_string(b.level));
  }
  if (a.channels() != 1 || b.channels() != 1) {
    throw std::invalid_argument("similarity metrics take single-channel signals");
  }
}

// Gradient of (1 - cc) + mse with respect to b.
Vector sim_grad(const Centered& c, const Vector& a, const Vector& b) {
  const double n = static_cast<double>(a.size());
  const double denom = std::sqrt(c.saa * c.sbb);
  const double cc = c.sab / denom;
  const Vector dcc = c.a / denom - cc * c.b / c.sbb;
  return -dcc + 2.0 * (b - a) / n;
}

}  // namespace

double pearson_cc(const Vector& a, const Vector& b) {
  const Centered c = center(a, b);
  return std::clamp(c.sab / std::sqrt(c.saa * c.sbb), -1.0, 1.0);
}

double pearson_cc(const SphericalSignal& a, const SphericalSignal& b) {
  check_pair(a, b);
  return pearson_cc(Vector(a.values.col(0)), Vector(b.values.col(0)));
}

double mean_squared_error(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() == 0) throw std::invalid_argument("mse: size mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double mean_squared_error(const SphericalSignal& a, const SphericalSignal& b) {
  check_pair(a, b);
  return mean_squared_error(Vector(a.values.col(0)), Vector(b.values.col(0)));
}

SimilarityLoss loss_sim(const SphericalSignal& fixed, const SphericalSignal& warped) {
  check_pair(fixed, warped);
  const Vector a = fixed.values.col(0);
  const Vector b = warped.values.col(0);
  const Centered c = center(a, b);
  SimilarityLoss out;
  out.cc = c.sab / std::sqrt(c.saa * c.sbb);
  out.mse = mean_squared_error(a, b);
  out.value = (1.0 - out.cc) + out.mse;
  out.grad = sim_grad(c, a, b);
  return out;
}

double field_roughness(const Points& u, const std::vector<std::vector<int>>& neighbors) {
  if (static_cast<std::size_t>(u.rows()) != neighbors.size()) {
    throw std::invalid_argument("displacement rows do not match neighbor lists");
  }
  double g = 0.0;
  for (Eigen::Index v = 0; v < u.rows(); ++v) {
    const auto& ring = neighbors[static_cast<std::size_t>(v)];
    if (ring.empty()) continue;
    Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
    for (int j : ring) acc += (u.row(v) - u.row(j)).cwiseAbs();
    g += acc.sum() / static_cast<double>(ring.size());
  }
  return g;
}

double loss_reg(const DeformationField& coarse, const DeformationField& fine, double lambda1,
                double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("regularization weights must be >= 0");
  validate_field(coarse);
  validate_field(fine);
  auto g = [](const DeformationField& f) {
    const Icosphere& mesh = cached_icosphere(f.mesh_level);
    return field_roughness(f.targets - mesh.vertices(), mesh.one_rings());
  };
  return 0.5 * (lambda1 * g(coarse) + lambda2 * g(fine));
}

DistortionStats summarize(std::vector<double> values) {
  DistortionStats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  s.max = values.back();
  auto pct = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  s.p95 = pct(0.95);
  s.p98 = pct(0.98);
  return s;
}

Eigen::Vector2d singular_values_2x2(const Eigen::Matrix2d& F) {
  const double e = 0.5 * (F(0, 0) + F(1, 1));
  const double f = 0.5 * (F(0, 0) - F(1, 1));
  const double g = 0.5 * (F(1, 0) + F(0, 1));
  const double h = 0.5 * (F(1, 0) - F(0, 1));
  const double q = std::hypot(e, h);
  const double r = std::hypot(f, g);
  return {q + r, std::abs(q - r)};
}

namespace {

// Edge matrix [q-p, r-p] in an orthonormal frame of the plane orthogonal to
// the centroid direction; e2 = n x e1 keeps every frame right-handed about
// the outward normal.
Eigen::Matrix2d tangent_edges(const Vec3& p, const Vec3& q, const Vec3& r) {
  const Vec3 n = (p + q + r).normalized();
  const Vec3 d1 = q - p, d2 = r - p;
  const Vec3 e1 = (d1 - n.dot(d1) * n).normalized();
  const Vec3 e2 = n.cross(e1);
  Eigen::Matrix2d E;
  E << e1.dot(d1), e1.dot(d2), e2.dot(d1), e2.dot(d2);
  return E;
}

}  // namespace

TriangleDistortion triangle_distortion(const Vec3& p, const Vec3& q, const Vec3& r, const Vec3& p2,
                                       const Vec3& q2, const Vec3& r2) {
  if (p == p2 && q == q2 && r == r2) return {};
  const Eigen::Matrix2d E = tangent_edges(p, q, r);
  const double area = E.determinant();
  if (!(std::abs(area) > 1e-300)) throw std::invalid_argument("degenerate source triangle");
  const Eigen::Matrix2d F = tangent_edges(p2, q2, r2) * E.inverse();
  TriangleDistortion t;
  const Eigen::Vector2d s = singular_values_2x2(F);
  t.sigma1 = s[0];
  t.sigma2 = s[1];
  t.J = F.determinant();
  t.R = t.sigma2 > 0.0 ? t.sigma1 / t.sigma2 : std::numeric_limits<double>::infinity();
  return t;
}

DistortionReport distortion_report(const Icosphere& before, const DeformationField& field) {
  validate_field(field);
  if (field.mesh_level != before.level()) {
    throw std::invalid_argument("field level " + std::to_string(field.mesh_level) +
                                " does not match mesh level " + std::to_string(before.level()));
  }
  DistortionReport rep;
  rep.triangles.reserve(before.num_faces());
  std::vector<double> lj, lr;
  for (std::size_t fi = 0; fi < before.num_faces(); ++fi) {
    const auto& f = before.faces()[fi];
    auto tgt = [&](int i) { return Vec3(field.targets.row(i).transpose()); };
    TriangleDistortion t;
    try {
      t = triangle_distortion(before.vertex(static_cast<std::size_t>(f[0])),
                              before.vertex(static_cast<std::size_t>(f[1])),
                              before.vertex(static_cast<std::size_t>(f[2])), tgt(f[0]), tgt(f[1]),
                              tgt(f[2]));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("face " + std::to_string(fi) + " has zero area");
    }
    rep.triangles.push_back(t);
    if (t.J <= 0.0) ++rep.folds;
    if (t.J != 0.0) lj.push_back(std::abs(std::log2(std::abs(t.J))));
    if (std::isfinite(t.R)) lr.push_back(std::abs(std::log2(t.R)));
  }
  rep.log2_j = summarize(std::move(lj));
  rep.log2_r = summarize(std::move(lr));
  return rep;
}

std::string distortion_csv(const DistortionReport& report) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "metric,mean,std,max,p95,p98\n";
  auto row = [&](const char* name, const DistortionStats& s) {
    os << name << ',' << s.mean << ',' << s.std << ',' << s.max << ',' << s.p95 << ',' << s.p98
       << '\n';
  };
  row("log2J", report.log2_j);
  row("log2R", report.log2_r);
  return os.str();
}

namespace ad_ops {

// Differences this small get a zero subgradient, so an unmoved field whose
// displacement carries only rounding noise is stationary.
constexpr double kSignDeadZone = 1e-12;

ad::Var loss_sim(const Vector& fixed, ad::Var warped) {
  if (warped.cols() != 1 || warped.rows() != fixed.size()) {
    throw std::invalid_argument("loss_sim: warped must be an N x 1 column matching fixed");
  }
  const Vector b = warped.value().col(0);
  const Centered c = center(fixed, b);
  const double cc = c.sab / std::sqrt(c.saa * c.sbb);
  const double value = (1.0 - cc) + mean_squared_error(fixed, b);
  auto grad = std::make_shared<Vector>(sim_grad(c, fixed, b));
  return warped.tape()->record(Matrix::Constant(1, 1, value), {warped},
                               [warped, grad](ad::Tape& t, const Matrix& g) {
                                 t.accumulate(warped, g(0, 0) * Matrix(*grad));
                               });
}

ad::Var field_roughness(ad::Var displacement, const std::vector<std::vector<int>>& neighbors) {
  const Matrix& u = displacement.value();
  if (u.cols() != 3 || static_cast<std::size_t>(u.rows()) != neighbors.size()) {
    throw std::invalid_argument("displacement must be N x 3 matching neighbor lists");
  }
  const double value = sphreg::field_roughness(Points(u), neighbors);
  const auto* nb = &neighbors;
  return displacement.tape()->record(
      Matrix::Constant(1, 1, value), {displacement}, [displacement, nb](ad::Tape& t, const Matrix& g) {
        const Matrix& u = displacement.value();
        Matrix gu = Matrix::Zero(u.rows(), 3);
        for (Eigen::Index v = 0; v < u.rows(); ++v) {
          const auto& ring = (*nb)[static_cast<std::size_t>(v)];
          if (ring.empty()) continue;
          const double w = g(0, 0) / static_cast<double>(ring.size());
          for (int j : ring) {
            for (int d = 0; d < 3; ++d) {
              const double diff = u(v, d) - u(j, d);
              const double s = diff > kSignDeadZone ? w : (diff < -kSignDeadZone ? -w : 0.0);
              gu(v, d) += s;
              gu(j, d) -= s;
            }
          }
        }
        t.accumulate(displacement, gu);
      });
}

}  // namespace ad_ops
}  // namespace sphreg
