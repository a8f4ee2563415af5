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

namespace sphreg {

// Control points of a discrete registration scale and the candidate target
// (label) positions of each. Slot 0 of every label set is the control point
// itself.
struct ControlGrid {
  int control_level = -1;  // -1 for hand-built grids
  int label_level = -1;
  Points control_positions;                    // N_c x 3
  std::vector<std::vector<int>> neighbors;     // control adjacency (symmetric)
  Eigen::MatrixXi labels;                      // N_c x N_l label-level vertex ids (may be empty)
  std::vector<Points> label_positions;         // N_c entries of N_l x 3
  std::vector<Points> label_rotations;         // shortest rotation vector to each label

  std::size_t num_controls() const { return static_cast<std::size_t>(control_positions.rows()); }
  std::size_t num_labels() const {
    return label_positions.empty() ? 0 : static_cast<std::size_t>(label_positions.front().rows());
  }
};

// Label sets from the label-level mesh: the coincident vertex plus every
// vertex within `hops` one-ring steps. The nearest `max_labels` are kept (or
// the smallest set size when `max_labels` is 0); slots after the identity are
// then ordered by azimuth around the control point.
ControlGrid build_label_sets(int control_level, int label_level, int hops, int max_labels = 0);

// Grid from explicit geometry; validates unit norms, identity slot 0,
// uniform label counts and symmetric adjacency.
ControlGrid make_control_grid(Points control_positions, std::vector<std::vector<int>> neighbors,
                              std::vector<Points> label_positions);

}  // namespace sphreg
