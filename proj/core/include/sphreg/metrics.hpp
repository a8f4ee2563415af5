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

#include <string>
#include <vector>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/icosphere.hpp"
#include "sphreg/warp.hpp"

namespace sphreg {

// Pearson correlation over vertices. Throws std::invalid_argument when either
// input has zero variance.
double pearson_cc(const Vector& a, const Vector& b);
double pearson_cc(const SphericalSignal& a, const SphericalSignal& b);

double mean_squared_error(const Vector& a, const Vector& b);
double mean_squared_error(const SphericalSignal& a, const SphericalSignal& b);

struct SimilarityLoss {
  double value = 0.0;  // (1 - cc) + mse
  double cc = 0.0;
  double mse = 0.0;
  Vector grad;  // d value / d warped
};

SimilarityLoss loss_sim(const SphericalSignal& fixed, const SphericalSignal& warped);

// Sum over vertices and xyz components of the mean absolute difference of a
// displacement component against the vertex's neighbors.
double field_roughness(const Points& displacement, const std::vector<std::vector<int>>& neighbors);

// 0.5 * (lambda1 * g(phi1) + lambda2 * g(phi2)), displacement = target - vertex.
double loss_reg(const DeformationField& coarse, const DeformationField& fine, double lambda1,
                double lambda2);

struct DistortionStats {
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
  double p95 = 0.0;
  double p98 = 0.0;
};

// Linear-interpolation percentiles on a copy of `values`.
DistortionStats summarize(std::vector<double> values);

struct TriangleDistortion {
  double sigma1 = 1.0;  // largest singular value of F
  double sigma2 = 1.0;
  double J = 1.0;  // det F, negative for flipped triangles
  double R = 1.0;  // sigma1 / sigma2
};

// F maps the source triangle's tangent-plane edge matrix to the deformed one.
TriangleDistortion triangle_distortion(const Vec3& p, const Vec3& q, const Vec3& r, const Vec3& p2,
                                       const Vec3& q2, const Vec3& r2);

// Singular values of a 2x2 matrix in closed form, largest first.
Eigen::Vector2d singular_values_2x2(const Eigen::Matrix2d& F);

struct DistortionReport {
  std::vector<TriangleDistortion> triangles;
  DistortionStats log2_j;  // of |log2 |J||
  DistortionStats log2_r;  // of |log2 R|
  std::size_t folds = 0;   // triangles with J <= 0
};

DistortionReport distortion_report(const Icosphere& before, const DeformationField& field);

// "metric,mean,std,max,p95,p98" table with rows log2J and log2R.
std::string distortion_csv(const DistortionReport& report);

namespace ad_ops {

// 1x1 (1 - cc) + mse of single-channel `warped` against constant `fixed`.
ad::Var loss_sim(const Vector& fixed, ad::Var warped);

// 1x1 field_roughness of an N x 3 displacement.
ad::Var field_roughness(ad::Var displacement, const std::vector<std::vector<int>>& neighbors);

}  // namespace ad_ops
}  // namespace sphreg
