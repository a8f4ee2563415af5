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

#include <cstddef>
#include <memory>

#include "sphreg/common.hpp"
#include "sphreg/icosphere.hpp"

namespace sphreg {

inline constexpr int kMaxDegree = 64;

// Canonical coefficient layout: degree l, order m in [-l, l] lives at l*l + l + m.
constexpr int flat_index(int l, int m) { return l * l + l + m; }
constexpr int coefficient_count(int bandwidth) { return (bandwidth + 1) * (bandwidth + 1); }
// Degree of the coefficient stored at a flat index.
int degree_of(int flat);

// Real orthonormal spherical harmonic Y_l^m at a unit vector, without the
// Condon-Shortley phase: m > 0 uses cos(m phi), m < 0 uses sin(|m| phi).
double eval_real_sh(int l, int m, const Vec3& point);

// All harmonics up to `bandwidth` in flat-index order.
Vector eval_real_sh_all(int bandwidth, const Vec3& point);

struct HarmonicBasis {
  int mesh_level = 0;
  int bandwidth = 0;
  Matrix Y;                 // N x (L+1)^2
  Matrix forward_operator;  // (L+1)^2 x N, Moore-Penrose pseudo-inverse of Y

  std::size_t num_coefficients() const { return static_cast<std::size_t>(Y.cols()); }
};

HarmonicBasis build_basis(const Icosphere& mesh, int bandwidth);

// Bases are immutable once built; this returns a shared instance per
// (level, bandwidth).
std::shared_ptr<const HarmonicBasis> cached_basis(int level, int bandwidth);

struct SpectralCoeffs {
  int bandwidth = 0;
  Matrix coeffs;  // (L+1)^2 x C

  std::size_t channels() const { return static_cast<std::size_t>(coeffs.cols()); }
  double& at(int l, int m, int channel) { return coeffs(flat_index(l, m), channel); }
  double at(int l, int m, int channel) const { return coeffs(flat_index(l, m), channel); }
};

SpectralCoeffs sht_forward(const SphericalSignal& signal, const HarmonicBasis& basis);
// Degrees above coeffs.bandwidth are treated as zero.
SphericalSignal sht_inverse(const SpectralCoeffs& coeffs, const HarmonicBasis& basis);

}  // namespace sphreg
