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

#include "sphreg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "sphreg/geometry.hpp"

namespace sphreg {

namespace {

constexpr double kLogFloor = 1e-12;

Matrix kernel(const Matrix& arc2, double sigma) {
  return (-arc2.array() / (2.0 * sigma * sigma)).exp().matrix();
}

// Messages m_i(l) = sum_j sum_l' K_ij(l,l') mu(l,l') Q_j(l').
Matrix messages(const Matrix& Q, const Matrix& mu, double sigma, const CrfPairTable& pairs) {
  Matrix m = Matrix::Zero(Q.rows(), Q.cols());
  for (std::size_t p = 0; p < pairs.from.size(); ++p) {
    const Matrix km = kernel(pairs.arc2[p], sigma).cwiseProduct(mu);
    m.row(pairs.from[p]) += (km * Q.row(pairs.to[p]).transpose()).transpose();
  }
  return m;
}

Matrix softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const RowVector e = (z.row(i).array() - z.row(i).maxCoeff()).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

void check_probs(const Matrix& Q, const ControlGrid& grid) {
  if (static_cast<std::size_t>(Q.rows()) != grid.num_controls() ||
      static_cast<std::size_t>(Q.cols()) != grid.num_labels()) {
    throw std::invalid_argument("probability matrix shape does not match control grid");
  }
  if (!Q.allFinite() || (Q.array() < 0.0).any()) {
    throw std::invalid_argument("probabilities must be finite and nonnegative");
  }
}

}  // namespace

CrfParams default_crf_params(const ControlGrid& grid, int iterations, double weight) {
  const auto nl = static_cast<Eigen::Index>(grid.num_labels());
  CrfParams p;
  p.iterations = iterations;
  p.mu = Matrix::Ones(nl, nl) - Matrix::Identity(nl, nl);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.num_controls(); ++i)
    for (int j : grid.neighbors[i]) {
      total += geometry::arc_length(grid.control_positions.row(static_cast<Eigen::Index>(i)).transpose(),
                                    grid.control_positions.row(j).transpose());
      ++count;
    }
  p.sigma(0, 0) = count > 0 ? total / static_cast<double>(count) : 0.1;
  p.weight(0, 0) = weight;
  validate_crf_params(p, grid.num_labels());
  return p;
}

void validate_crf_params(const CrfParams& p, std::size_t num_labels) {
  if (p.iterations < 0 || p.iterations > kMaxCrfIterations) {
    throw std::invalid_argument("CRF iterations must be in [0, " +
                                std::to_string(kMaxCrfIterations) + "], got " +
                                std::to_string(p.iterations));
  }
  const auto nl = static_cast<Eigen::Index>(num_labels);
  if (p.mu.rows() != nl || p.mu.cols() != nl) {
    throw std::invalid_argument("label compatibility must be " + std::to_string(nl) + "x" +
                                std::to_string(nl));
  }
  if (!p.mu.allFinite()) throw std::invalid_argument("label compatibility is not finite");
  if (p.sigma.size() != 1 || !(p.sigma_value() > 0.0) || !std::isfinite(p.sigma_value())) {
    throw std::invalid_argument("CRF kernel bandwidth must be positive");
  }
  if (p.weight.size() != 1 || !(p.weight_value() >= 0.0) || !std::isfinite(p.weight_value())) {
    throw std::invalid_argument("CRF pairwise weight must be nonnegative");
  }
}

void project_crf_params(CrfParams& p) {
  p.weight(0, 0) = std::max(p.weight(0, 0), 0.0);
  p.sigma(0, 0) = std::max(p.sigma(0, 0), 1e-3);
}

CrfPairTable CrfPairTable::make(const ControlGrid& grid) {
  CrfPairTable t;
  const auto nl = static_cast<Eigen::Index>(grid.num_labels());
  for (std::size_t i = 0; i < grid.num_controls(); ++i) {
    for (int j : grid.neighbors[i]) {
      Matrix a2(nl, nl);
      for (Eigen::Index l = 0; l < nl; ++l)
        for (Eigen::Index k = 0; k < nl; ++k) {
          const double a = geometry::arc_length(grid.label_positions[i].row(l).transpose(),
                                                grid.label_positions[static_cast<std::size_t>(j)]
                                                    .row(k)
                                                    .transpose());
          a2(l, k) = a * a;
        }
      t.from.push_back(static_cast<int>(i));
      t.to.push_back(j);
      t.arc2.push_back(std::move(a2));
    }
  }
  return t;
}

double crf_energy(const std::vector<int>& assignment, const DeformationProbabilities& probs,
                  const ControlGrid& grid, const CrfParams& params) {
  check_probs(probs.Q, grid);
  validate_crf_params(params, grid.num_labels());
  const auto nl = static_cast<int>(grid.num_labels());
  if (assignment.size() != grid.num_controls()) {
    throw std::invalid_argument("assignment has " + std::to_string(assignment.size()) +
                                " entries for " + std::to_string(grid.num_controls()) +
                                " control points");
  }
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] < 0 || assignment[i] >= nl) {
      throw std::out_of_range("label " + std::to_string(assignment[i]) + " of control " +
                              std::to_string(i) + " outside [0, " + std::to_string(nl) + ")");
    }
  }
  const double s = params.sigma_value();
  double e = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    e -= std::log(probs.Q(static_cast<Eigen::Index>(i), assignment[i]) + kLogFloor);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const int li = assignment[i];
    const Vec3 pi = grid.label_positions[i].row(li).transpose();
    for (int j : grid.neighbors[i]) {
      const int lj = assignment[static_cast<std::size_t>(j)];
      const double a =
          geometry::arc_length(pi, grid.label_positions[static_cast<std::size_t>(j)].row(lj).transpose());
      e += params.weight_value() * params.mu(li, lj) * std::exp(-a * a / (2.0 * s * s));
    }
  }
  return e;
}

DeformationProbabilities crf_refine(const DeformationProbabilities& probs, const ControlGrid& grid,
                                    const CrfParams& params, const CrfObserver& observer) {
  check_probs(probs.Q, grid);
  validate_crf_params(params, grid.num_labels());
  if (params.iterations == 0) return probs;
  const CrfPairTable pairs = CrfPairTable::make(grid);
  const Matrix log_q0 = (probs.Q.array() + kLogFloor).log().matrix();
  Matrix Q = probs.Q;
  for (int t = 0; t < params.iterations; ++t) {
    // With w = 0 the update is softmax(log Q0), which is Q0 itself; skip the
    // round trip through the log floor so the identity is exact.
    if (params.weight_value() != 0.0) {
      Q = softmax(log_q0 - params.weight_value() * messages(Q, params.mu, params.sigma_value(), pairs));
    }
    if (observer) observer(t, Q);
  }
  return {Q};
}

namespace ad_ops {

namespace {

ad::Var mean_field_step(ad::Var Q, ad::Var Q0, ad::Var mu, ad::Var sigma, ad::Var weight,
                        const CrfPairTable& pairs) {
  const double s = sigma.value()(0, 0);
  const double w = weight.value()(0, 0);
  Matrix m = messages(Q.value(), mu.value(), s, pairs);
  Matrix out = softmax((Q0.value().array() + kLogFloor).log().matrix() - w * m);
  auto msg = std::make_shared<Matrix>(std::move(m));
  auto qn = std::make_shared<Matrix>(out);
  const CrfPairTable* tab = &pairs;
  return Q.tape()->record(
      std::move(out), {Q, Q0, mu, sigma, weight},
      [Q, Q0, mu, sigma, weight, msg, qn, tab, s, w](ad::Tape& t, const Matrix& g) {
        Matrix gz(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          const double inner = g.row(i).dot(qn->row(i));
          gz.row(i) = qn->row(i).cwiseProduct((g.row(i).array() - inner).matrix());
        }
        t.accumulate(Q0, (gz.array() / (Q0.value().array() + kLogFloor)).matrix());
        t.accumulate(weight, Matrix::Constant(1, 1, -gz.cwiseProduct(*msg).sum()));
        const Matrix gm = -w * gz;
        const Matrix& mu_v = mu.value();
        const Matrix& q = Q.value();
        Matrix gq = Matrix::Zero(q.rows(), q.cols());
        Matrix gmu = Matrix::Zero(mu_v.rows(), mu_v.cols());
        double gs = 0.0;
        for (std::size_t p = 0; p < tab->from.size(); ++p) {
          const Matrix k = kernel(tab->arc2[p], s);
          const Vector gmi = gm.row(tab->from[p]).transpose();
          const Vector qj = q.row(tab->to[p]).transpose();
          gq.row(tab->to[p]) += (k.cwiseProduct(mu_v).transpose() * gmi).transpose();
          const Matrix outer = gmi * qj.transpose();
          gmu += outer.cwiseProduct(k);
          gs += (outer.cwiseProduct(mu_v).cwiseProduct(k).cwiseProduct(tab->arc2[p])).sum() /
                (s * s * s);
        }
        t.accumulate(Q, gq);
        t.accumulate(mu, gmu);
        t.accumulate(sigma, Matrix::Constant(1, 1, gs));
      });
}

}  // namespace

ad::Var crf_refine(ad::Var Q, ad::Var mu, ad::Var sigma, ad::Var weight, int iterations,
                   const CrfPairTable& pairs) {
  if (iterations < 0 || iterations > kMaxCrfIterations) {
    throw std::invalid_argument("CRF iterations must be in [0, " +
                                std::to_string(kMaxCrfIterations) + "]");
  }
  ad::Var cur = Q;
  for (int t = 0; t < iterations; ++t) cur = mean_field_step(cur, Q, mu, sigma, weight, pairs);
  return cur;
}

}  // namespace ad_ops
}  // namespace sphreg
