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

#include "sphreg/align.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sphreg/metrics.hpp"

namespace sphreg {

Points golden_spiral_axes(int count) {
  if (count < 1) throw std::invalid_argument("need at least one axis");
  Points axes(count, 3);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    axes.row(i) << r * std::cos(phi), r * std::sin(phi), z;
  }
  return axes;
}

SphericalSignal rotate_signal(const SphericalSignal& moving, const Mat3& rotation) {
  validate_signal(moving);
  const Icosphere& mesh = cached_icosphere(moving.level);
  Points targets = mesh.vertices() * rotation.transpose();
  for (Eigen::Index i = 0; i < targets.rows(); ++i) targets.row(i).normalize();
  return {moving.level, barycentric_resample(moving, mesh, targets)};
}

AlignmentResult rigid_align(const SphericalSignal& moving, const SphericalSignal& fixed, int axes,
                            int angles, int search_level) {
  validate_signal(moving);
  validate_signal(fixed);
  if (moving.level != fixed.level) throw std::invalid_argument("moving and fixed levels differ");
  if (angles < 1) throw std::invalid_argument("need at least one angle");
  const int level = std::min(search_level, moving.level);
  const SphericalSignal m = downsample_to_level(moving, level);
  const SphericalSignal f = downsample_to_level(fixed, level);

  AlignmentResult best;
  best.identity_cc = pearson_cc(m, f);
  best.cc = best.identity_cc;
  const Points axis_set = golden_spiral_axes(axes);
  for (int a = 0; a < axes; ++a) {
    const Vec3 axis = axis_set.row(a).transpose();
    for (int k = 1; k <= angles; ++k) {
      const double angle = 2.0 * std::numbers::pi * k / (angles + 1);
      const Mat3 R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
      const double cc = pearson_cc(rotate_signal(m, R), f);
      if (cc > best.cc) {
        best.cc = cc;
        best.rotation = R;
      }
    }
  }
  return best;
}

}  // namespace sphreg
