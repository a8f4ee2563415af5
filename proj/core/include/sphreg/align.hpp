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

#include <vector>

#include "sphreg/common.hpp"
#include "sphreg/icosphere.hpp"

namespace sphreg {

// Roughly uniform unit axes on the sphere (golden-angle spiral).
Points golden_spiral_axes(int count);

struct AlignmentResult {
  Mat3 rotation = Mat3::Identity();
  double cc = 0.0;           // best correlation found
  double identity_cc = 0.0;  // correlation without rotation
};

// Coarse rigid search: every axis x `angles` rotation angles in (0, 2pi),
// plus the identity. Both signals are compared on `search_level`; the result
// maximizes pearson_cc(moving sampled at R v, fixed).
AlignmentResult rigid_align(const SphericalSignal& moving, const SphericalSignal& fixed,
                            int axes = 64, int angles = 16, int search_level = 2);

// Pull-back of `moving` through the rotation: value at v is moving(R v).
SphericalSignal rotate_signal(const SphericalSignal& moving, const Mat3& rotation);

}  // namespace sphreg
