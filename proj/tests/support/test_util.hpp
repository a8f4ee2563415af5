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
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"

namespace sphreg::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 v(normal(rng), normal(rng), normal(rng));
  return v.normalized();
}

// Rodrigues rotation matrix about a unit axis, written out independently of
// the library's rotation helpers.
inline Mat3 axis_angle_matrix(const Vec3& axis, double angle) {
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Reverse-mode gradient of sum(f(inputs) .* weights) against central
// differences. Returns the largest |analytic - numeric| / max(|a|, |n|, floor)
// over every input entry.
using TapeFunction = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline double gradient_mismatch(const TapeFunction& f, const std::vector<Matrix>& inputs,
                                std::uint64_t seed, double h = 1e-6, double floor = 1e-6) {
  auto evaluate = [&](const std::vector<Matrix>& xs, const Matrix* weights,
                      std::vector<Matrix>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& x : xs) vars.push_back(tape.parameter(x));
    const ad::Var out = f(tape, vars);
    Matrix w = weights != nullptr ? *weights : Matrix::Ones(out.rows(), out.cols());
    const ad::Var loss = ad::sum_all(ad::hadamard(out, tape.constant(w)));
    if (grads != nullptr) {
      tape.backward(loss);
      for (const ad::Var& v : vars) grads->push_back(tape.grad(v));
    }
    return std::pair<double, Matrix>(loss.value()(0, 0), out.value());
  };
  std::mt19937_64 rng(seed);
  const Matrix shape = evaluate(inputs, nullptr, nullptr).second;
  const Matrix weights = random_matrix(shape.rows(), shape.cols(), rng);
  std::vector<Matrix> grads;
  evaluate(inputs, &weights, &grads);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double num =
          (evaluate(plus, &weights, nullptr).first - evaluate(minus, &weights, nullptr).first) /
          (2.0 * h);
      const double ana = grads[k].data()[i];
      const double denom = std::max({std::abs(num), std::abs(ana), floor});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
  }
  return worst;
}

}  // namespace sphreg::test
