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

#include <functional>
#include <vector>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/control_grid.hpp"
#include "sphreg/discrete_reg.hpp"

namespace sphreg {

constexpr int kMaxCrfIterations = 20;

struct CrfParams {
  int iterations = 5;        // T
  Matrix mu;                 // N_l x N_l label compatibility
  Matrix sigma{{0.1}};       // 1x1 Gaussian kernel bandwidth (radians)
  Matrix weight{{1.0}};      // 1x1 pairwise weight w >= 0

  double sigma_value() const { return sigma(0, 0); }
  double weight_value() const { return weight(0, 0); }
};

// mu = 1 - I, sigma = mean control edge arc.
CrfParams default_crf_params(const ControlGrid& grid, int iterations = 5, double weight = 1.0);

void validate_crf_params(const CrfParams& params, std::size_t num_labels);

// Clamps w to >= 0 and sigma to >= 1e-3 after an unconstrained update.
void project_crf_params(CrfParams& params);

// Squared great-circle distances between every label of control i and every
// label of each one-ring neighbor j, listed per ordered pair (i, j).
struct CrfPairTable {
  std::vector<int> from;
  std::vector<int> to;
  std::vector<Matrix> arc2;  // N_l x N_l, rows indexed by the label of `from`

  static CrfPairTable make(const ControlGrid& grid);
};

// Unary -log(Q + 1e-12) plus pairwise w * mu(l_i, l_j) * K_G over ordered
// adjacent pairs.
double crf_energy(const std::vector<int>& assignment, const DeformationProbabilities& probs,
                  const ControlGrid& grid, const CrfParams& params);

using CrfObserver = std::function<void(int iteration, const Matrix& Q)>;

// T mean-field updates; `observer` sees Q after every iteration.
DeformationProbabilities crf_refine(const DeformationProbabilities& probs, const ControlGrid& grid,
                                    const CrfParams& params, const CrfObserver& observer = {});

namespace ad_ops {

// Unrolled mean-field iterations, differentiable in Q, mu, sigma and w.
ad::Var crf_refine(ad::Var Q, ad::Var mu, ad::Var sigma, ad::Var weight, int iterations,
                   const CrfPairTable& pairs);

}  // namespace ad_ops
}  // namespace sphreg
