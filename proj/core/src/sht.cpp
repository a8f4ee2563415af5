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

#include "sphreg/sht.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

namespace sphreg {
namespace {

// Fully normalized associated Legendre values sqrt((2l+1)/4pi (l-m)!/(l+m)!) P_l^m
// for 0 <= m <= l <= L, without the (-1)^m phase, stored at (l, m).
Matrix normalized_legendre(int bandwidth, double cos_theta, double sin_theta) {
  Matrix p = Matrix::Zero(bandwidth + 1, bandwidth + 1);
  p(0, 0) = 1.0 / std::sqrt(4.0 * std::numbers::pi);
  for (int m = 1; m <= bandwidth; ++m) {
    p(m, m) = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_theta * p(m - 1, m - 1);
  }
  for (int m = 0; m < bandwidth; ++m) {
    p(m + 1, m) = std::sqrt(2.0 * m + 3.0) * cos_theta * p(m, m);
  }
  for (int m = 0; m <= bandwidth; ++m) {
    for (int l = m + 2; l <= bandwidth; ++l) {
      const double ll = static_cast<double>(l), mm = static_cast<double>(m);
      const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
      const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) /
                                 (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
      p(l, m) = a * (cos_theta * p(l - 1, m) - b * p(l - 2, m));
    }
  }
  return p;
}

}  // namespace

int degree_of(int flat) {
  int l = static_cast<int>(std::sqrt(static_cast<double>(flat)));
  while (l * l > flat) --l;
  while ((l + 1) * (l + 1) <= flat) ++l;
  return l;
}

Vector eval_real_sh_all(int bandwidth, const Vec3& point) {
  if (bandwidth < 0 || bandwidth > kMaxDegree) {
    throw std::out_of_range("bandwidth " + std::to_string(bandwidth) + " outside [0, " +
                            std::to_string(kMaxDegree) + "]");
  }
  const double z = std::clamp(point.z(), -1.0, 1.0);
  const double sin_theta = std::hypot(point.x(), point.y());
  const double phi = std::atan2(point.y(), point.x());
  const Matrix p = normalized_legendre(bandwidth, z, sin_theta);

  Vector out(coefficient_count(bandwidth));
  for (int l = 0; l <= bandwidth; ++l) {
    out[flat_index(l, 0)] = p(l, 0);
    for (int m = 1; m <= l; ++m) {
      const double scale = std::numbers::sqrt2 * p(l, m);
      out[flat_index(l, m)] = scale * std::cos(m * phi);
      out[flat_index(l, -m)] = scale * std::sin(m * phi);
    }
  }
  return out;
}

double eval_real_sh(int l, int m, const Vec3& point) {
  if (l < 0 || l > kMaxDegree) {
    throw std::out_of_range("degree " + std::to_string(l) + " outside [0, " +
                            std::to_string(kMaxDegree) + "]");
  }
  if (m < -l || m > l) {
    throw std::invalid_argument("order " + std::to_string(m) + " exceeds degree " +
                                std::to_string(l));
  }
  return eval_real_sh_all(l, point)[flat_index(l, m)];
}

HarmonicBasis build_basis(const Icosphere& mesh, int bandwidth) {
  if (bandwidth < 0 || bandwidth > kMaxDegree) {
    throw std::out_of_range("bandwidth " + std::to_string(bandwidth) + " outside [0, " +
                            std::to_string(kMaxDegree) + "]");
  }
  const auto n = mesh.num_vertices();
  const auto k = static_cast<std::size_t>(coefficient_count(bandwidth));
  if (n < k) {
    throw std::invalid_argument("mesh with " + std::to_string(n) +
                                " vertices cannot support bandwidth " +
                                std::to_string(bandwidth) + " (needs at least " +
                                std::to_string(k) + " samples)");
  }
  HarmonicBasis basis;
  basis.mesh_level = mesh.level();
  basis.bandwidth = bandwidth;
  basis.Y.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    basis.Y.row(static_cast<Eigen::Index>(i)) = eval_real_sh_all(bandwidth, mesh.vertex(i)).transpose();
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(basis.Y);
  if (cod.rank() < static_cast<Eigen::Index>(k)) {
    throw NumericError("harmonic sampling matrix is rank deficient (rank " +
                       std::to_string(cod.rank()) + " < " + std::to_string(k) + ")");
  }
  basis.forward_operator = cod.pseudoInverse();
  return basis;
}

std::shared_ptr<const HarmonicBasis> cached_basis(int level, int bandwidth) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const HarmonicBasis>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find({level, bandwidth});
    if (it != cache.end()) return it->second;
  }
  auto built = std::make_shared<const HarmonicBasis>(build_basis(cached_icosphere(level), bandwidth));
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(std::make_pair(level, bandwidth), std::move(built)).first->second;
}

SpectralCoeffs sht_forward(const SphericalSignal& signal, const HarmonicBasis& basis) {
  validate_signal(signal);
  if (signal.level != basis.mesh_level) {
    throw std::invalid_argument("signal level " + std::to_string(signal.level) +
                                " does not match basis level " +
                                std::to_string(basis.mesh_level));
  }
  return {basis.bandwidth, basis.forward_operator * signal.values};
}

SphericalSignal sht_inverse(const SpectralCoeffs& coeffs, const HarmonicBasis& basis) {
  if (coeffs.bandwidth > basis.bandwidth) {
    throw std::invalid_argument("coefficient bandwidth " + std::to_string(coeffs.bandwidth) +
                                " exceeds basis bandwidth " + std::to_string(basis.bandwidth));
  }
  if (coeffs.coeffs.rows() != coefficient_count(coeffs.bandwidth)) {
    throw std::invalid_argument("coefficient table has " + std::to_string(coeffs.coeffs.rows()) +
                                " rows, expected " +
                                std::to_string(coefficient_count(coeffs.bandwidth)));
  }
  const auto k = static_cast<Eigen::Index>(coefficient_count(coeffs.bandwidth));
  return {basis.mesh_level, basis.Y.leftCols(k) * coeffs.coeffs};
}

}  // namespace sphreg
