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

#include <memory>
#include <vector>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/control_grid.hpp"
#include "sphreg/icosphere.hpp"

namespace sphreg {

// Where every vertex of a mesh level maps to on the unit sphere.
struct DeformationField {
  int mesh_level = 0;
  Points targets;  // N x 3
};

DeformationField identity_field(int level);
void validate_field(const DeformationField& field);

// Per-fine-vertex location in the control mesh.
struct DensifyPlan {
  int control_level = 0;
  int target_level = 0;
  std::vector<BarycentricSample> samples;
};

std::shared_ptr<const DensifyPlan> cached_densify_plan(int control_level, int target_level);

// Rotation vector assigned to one control point: the shortest rotation taking
// the control point to its target, followed by the spin about the target that
// best aligns the neighbors' moved positions. Exactly zero when the control
// and all of its neighbors are unmoved.
Vec3 control_rotation(const ControlGrid& grid, const Points& moved, std::size_t c);

// Densifies control targets (N_c x 3) into a field on `target_level` by
// barycentric interpolation of the control rotation vectors.
DeformationField densify(const Points& moved, const ControlGrid& grid, int target_level);

// Pull-back warp: value at vertex v is `moving` sampled at field.targets[v].
SphericalSignal warp_signal(const SphericalSignal& moving, const DeformationField& field,
                            const Icosphere& mesh);

// composed(v) = second sampled at first(v), renormalized.
DeformationField compose(const DeformationField& first, const DeformationField& second);

namespace ad_ops {

// Samples the rows of `values` (bound to `mesh`) at each row of `targets`.
ad::Var warp(ad::Var values, ad::Var targets, const Icosphere& mesh);

ad::Var compose(ad::Var first, ad::Var second, const Icosphere& mesh);

// Control targets (N_c x 3) -> dense targets on `plan.target_level`.
ad::Var densify(ad::Var moved, const ControlGrid& grid, const DensifyPlan& plan);

}  // namespace ad_ops
}  // namespace sphreg
