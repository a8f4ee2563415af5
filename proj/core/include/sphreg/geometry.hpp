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

#include <algorithm>
#include <cmath>

#include "sphreg/common.hpp"

// Small rotation helpers on the unit sphere. The templates accept Eigen
// AutoDiffScalar so the same code yields Jacobians.
namespace sphreg::geometry {

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;

// Great-circle distance between unit vectors.
inline double arc_length(const Vec3& p, const Vec3& q) {
  return std::atan2(p.cross(q).norm(), p.dot(q));
}

// exp(r) applied to v (Rodrigues). r = 0 returns v unchanged.
template <typename T>
V3<T> rotate_by_vector(const V3<T>& r, const V3<T>& v) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = r.dot(r);
  T c, sinc, versine;
  if (theta2 < T(1e-8)) {
    const T t4 = theta2 * theta2;
    c = T(1) - theta2 / T(2) + t4 / T(24);
    sinc = T(1) - theta2 / T(6) + t4 / T(120);
    versine = T(0.5) - theta2 / T(24) + t4 / T(720);
  } else {
    const T theta = sqrt(theta2);
    c = cos(theta);
    sinc = sin(theta) / theta;
    versine = (T(1) - c) / theta2;
  }
  return v * c + r.cross(v) * sinc + r * (r.dot(v) * versine);
}

// Shortest rotation vector taking unit p to unit q (axis along p x q).
inline Vec3 log_map(const Vec3& p, const Vec3& q) {
  const Vec3 axis = p.cross(q);
  const double s = axis.norm();
  if (s == 0.0) return Vec3::Zero();
  return axis * (std::atan2(s, p.dot(q)) / s);
}

template <typename T>
struct Quat {
  T w;
  V3<T> v;
};

template <typename T>
Quat<T> quat_mul(const Quat<T>& a, const Quat<T>& b) {
  return {a.w * b.w - a.v.dot(b.v), b.v * a.w + a.v * b.w + a.v.cross(b.v)};
}

template <typename T>
V3<T> quat_rotate(const Quat<T>& q, const V3<T>& x) {
  const V3<T> t = q.v.cross(x) * T(2);
  return x + t * q.w + q.v.cross(t);
}

// Rotation vector of a unit quaternion (shortest representative).
template <typename T>
V3<T> quat_to_rotation_vector(Quat<T> q) {
  using std::atan2;
  using std::sqrt;
  if (q.w < T(0)) {
    q.w = -q.w;
    q.v = -q.v;
  }
  const T s2 = q.v.dot(q.v);
  if (s2 < T(1e-12)) {
    const T ratio2 = s2 / (q.w * q.w);
    return q.v * ((T(2) / q.w) * (T(1) - ratio2 / T(3) + ratio2 * ratio2 / T(5)));
  }
  const T s = sqrt(s2);
  return q.v * (T(2) * atan2(s, q.w) / s);
}

// Unit quaternion of the shortest rotation from unit p to unit d.
template <typename T>
Quat<T> shortest_arc(const V3<T>& p, const V3<T>& d) {
  using std::sqrt;
  Quat<T> q{T(1) + p.dot(d), p.cross(d)};
  const T n = sqrt(q.w * q.w + q.v.dot(q.v));
  q.w = q.w / n;
  q.v = q.v / n;
  return q;
}

}  // namespace sphreg::geometry
