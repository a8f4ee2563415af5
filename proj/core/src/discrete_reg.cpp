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

#include "sphreg/discrete_reg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <string>
#include <utility>

#include <unsupported/Eigen/AutoDiff>

#include "sphreg/geometry.hpp"

namespace sphreg {

ControlGrid make_control_grid(Points control_positions, std::vector<std::vector<int>> neighbors,
                              std::vector<Points> label_positions) {
  const auto nc = static_cast<std::size_t>(control_positions.rows());
  if (nc == 0) throw std::invalid_argument("control grid needs at least one control point");
  if (neighbors.size() != nc || label_positions.size() != nc) {
    throw std::invalid_argument("control grid: neighbor and label lists must have one entry per control");
  }
  const auto nl = label_positions.front().rows();
  if (nl < 1) throw std::invalid_argument("control grid needs at least one label");
  for (std::size_t c = 0; c < nc; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    if (std::abs(control_positions.row(row).norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("control point " + std::to_string(c) + " is not unit length");
    }
    if (label_positions[c].rows() != nl) {
      throw std::invalid_argument("label sets must all have " + std::to_string(nl) + " entries");
    }
    if (label_positions[c].row(0) != control_positions.row(row)) {
      throw std::invalid_argument("label slot 0 of control " + std::to_string(c) +
                                  " is not the control point");
    }
    for (Eigen::Index j = 0; j < nl; ++j) {
      if (std::abs(label_positions[c].row(j).norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("label " + std::to_string(j) + " of control " +
                                    std::to_string(c) + " is not unit length");
      }
    }
    for (int j : neighbors[c]) {
      if (j < 0 || static_cast<std::size_t>(j) >= nc || static_cast<std::size_t>(j) == c) {
        throw std::invalid_argument("control " + std::to_string(c) + " has invalid neighbor " +
                                    std::to_string(j));
      }
      const auto& back = neighbors[static_cast<std::size_t>(j)];
      if (std::find(back.begin(), back.end(), static_cast<int>(c)) == back.end()) {
        throw std::invalid_argument("control adjacency is not symmetric");
      }
    }
  }
  ControlGrid grid;
  grid.control_positions = std::move(control_positions);
  grid.neighbors = std::move(neighbors);
  grid.label_positions = std::move(label_positions);
  grid.label_rotations.reserve(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    Points rho(nl, 3);
    const Vec3 p = grid.control_positions.row(static_cast<Eigen::Index>(c)).transpose();
    for (Eigen::Index j = 0; j < nl; ++j)
      rho.row(j) = geometry::log_map(p, grid.label_positions[c].row(j).transpose()).transpose();
    grid.label_rotations.push_back(std::move(rho));
  }
  return grid;
}

ControlGrid build_label_sets(int control_level, int label_level, int hops, int max_labels) {
  if (control_level < 0 || label_level <= control_level || label_level > kMaxIcosphereLevel) {
    throw std::invalid_argument("label level " + std::to_string(label_level) +
                                " must be finer than control level " +
                                std::to_string(control_level) + " and at most " +
                                std::to_string(kMaxIcosphereLevel));
  }
  if (hops < 1) throw std::invalid_argument("label neighborhoods need hops >= 1");
  if (max_labels < 0) throw std::invalid_argument("max_labels must be >= 0");
  const Icosphere& coarse = cached_icosphere(control_level);
  const Icosphere& fine = cached_icosphere(label_level);
  const auto nc = coarse.num_vertices();

  std::vector<std::vector<int>> sets(nc);
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < nc; ++c) {
    std::vector<int> depth(fine.num_vertices(), -1);
    std::vector<int> found{static_cast<int>(c)};
    std::queue<int> frontier;
    depth[c] = 0;
    frontier.push(static_cast<int>(c));
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      if (depth[static_cast<std::size_t>(v)] == hops) continue;
      for (int u : fine.one_ring(static_cast<std::size_t>(v))) {
        if (depth[static_cast<std::size_t>(u)] >= 0) continue;
        depth[static_cast<std::size_t>(u)] = depth[static_cast<std::size_t>(v)] + 1;
        found.push_back(u);
        frontier.push(u);
      }
    }
    const Vec3 p = coarse.vertex(c);
    std::sort(found.begin() + 1, found.end(), [&](int a, int b) {
      const double da = geometry::arc_length(p, fine.vertex(static_cast<std::size_t>(a)));
      const double db = geometry::arc_length(p, fine.vertex(static_cast<std::size_t>(b)));
      return da != db ? da < db : a < b;
    });
    smallest = std::min(smallest, found.size());
    sets[c] = std::move(found);
  }
  std::size_t nl = smallest;
  if (max_labels > 0) {
    if (static_cast<std::size_t>(max_labels) > smallest) {
      throw std::invalid_argument(std::to_string(max_labels) + " labels requested but the smallest " +
                                  std::to_string(hops) + "-hop set has only " +
                                  std::to_string(smallest));
    }
    nl = static_cast<std::size_t>(max_labels);
  }

  // Within the kept set, order slots 1.. by azimuth in a tangent frame whose
  // first axis is the projected z axis (x axis near the poles), so that equal
  // slot indices point in similar directions at neighboring controls.
  for (std::size_t c = 0; c < nc; ++c) {
    const Vec3 p = coarse.vertex(c);
    const Vec3 ref = std::abs(p.z()) > 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
    const Vec3 e1 = (ref - ref.dot(p) * p).normalized();
    const Vec3 e2 = p.cross(e1);
    auto azimuth = [&](int v) {
      const Vec3 d = fine.vertex(static_cast<std::size_t>(v)) - p;
      double a = std::atan2(d.dot(e2), d.dot(e1));
      return a < 0.0 ? a + 2.0 * std::numbers::pi : a;
    };
    std::sort(sets[c].begin() + 1, sets[c].begin() + static_cast<std::ptrdiff_t>(nl),
              [&](int a, int b) { return azimuth(a) < azimuth(b); });
  }

  std::vector<Points> label_positions;
  Eigen::MatrixXi labels(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nl));
  for (std::size_t c = 0; c < nc; ++c) {
    Points pos(static_cast<Eigen::Index>(nl), 3);
    for (std::size_t j = 0; j < nl; ++j) {
      labels(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = sets[c][j];
      pos.row(static_cast<Eigen::Index>(j)) = fine.vertices().row(sets[c][j]);
    }
    label_positions.push_back(std::move(pos));
  }
  ControlGrid grid = make_control_grid(coarse.vertices(), coarse.one_rings(), std::move(label_positions));
  grid.control_level = control_level;
  grid.label_level = label_level;
  grid.labels = std::move(labels);
  return grid;
}

void validate_unet_config(const UNetConfig& c) {
  if (c.bandwidth < 4 || c.bandwidth % 4 != 0) {
    throw std::invalid_argument("U-Net bandwidth must be a positive multiple of 4, got " +
                                std::to_string(c.bandwidth));
  }
  if (c.channels < 1 || c.in_channels < 1) throw std::invalid_argument("channel counts must be >= 1");
  if (c.heads < 1 || (4 * c.channels) % c.heads != 0) {
    throw std::invalid_argument("bottleneck width " + std::to_string(4 * c.channels) +
                                " is not divisible by " + std::to_string(c.heads) + " heads");
  }
  if (c.num_labels < 2) throw std::invalid_argument("need at least 2 labels per control point");
  if (c.match_dim < 1) throw std::invalid_argument("match_dim must be >= 1");
  const auto n = icosphere_vertex_count(c.mesh_level);
  if (n < static_cast<std::size_t>(coefficient_count(c.bandwidth))) {
    throw std::invalid_argument("mesh level " + std::to_string(c.mesh_level) + " (" +
                                std::to_string(n) + " vertices) cannot carry bandwidth " +
                                std::to_string(c.bandwidth));
  }
}

UNetParams init_unet(const UNetConfig& config, std::mt19937_64& rng, bool zero_head) {
  validate_unet_config(config);
  const int L = config.bandwidth, C = config.channels;
  UNetParams p;
  p.config = config;
  p.encoder[0] = make_block(config.in_channels, C, L, rng);
  p.encoder[1] = make_block(C, 2 * C, L / 2, rng);
  p.encoder[2] = make_block(2 * C, 4 * C, L / 4, rng);
  p.graph[0] = make_gat_layer(4 * C, config.heads, rng);
  p.graph[1] = make_gat_layer(4 * C, config.heads, rng);
  p.decoder[0] = make_block(4 * C + 2 * C, 2 * C, L / 2, rng);
  p.decoder[1] = make_block(2 * C + C, C, L, rng);
  p.head = make_block(C, config.head_channels(), L, rng);
  if (zero_head) {
    const int zeroed = config.label_head == LabelHead::kDirect ? config.num_labels : config.match_dim;
    p.head.filter.h.topRows(static_cast<Eigen::Index>(zeroed) * C).setZero();
    p.head.filter.alpha.topRows(zeroed).setZero();
  }
  return p;
}

UNetBases UNetBases::make(int mesh_level, int bandwidth) {
  UNetBases b;
  b.full = cached_basis(mesh_level, bandwidth);
  b.half = cached_basis(mesh_level, bandwidth / 2);
  b.quarter = cached_basis(mesh_level, bandwidth / 4);
  b.graph = std::make_shared<const Neighborhoods>(self_and_one_ring(cached_icosphere(mesh_level)));
  return b;
}

namespace {

ad::Var block(ad::Var x, BlockParams& p, const HarmonicBasis& basis, ad::ParamBinder& bind,
              ForwardMode mode) {
  auto y = ad_ops::zonal_convolve(x, bind(p.filter.h), bind(p.filter.alpha), basis, basis.bandwidth);
  y = ad_ops::batch_norm(y, bind(p.bn.gamma), bind(p.bn.beta), p.bn,
                         mode.training ? NormMode::kBatch : NormMode::kRunning,
                         mode.training && mode.update_stats);
  return ad::relu(y);
}

}  // namespace

ad::Var unet_forward(ad::Var moving, ad::Var fixed, UNetParams& params, const UNetBases& bases,
                     ad::ParamBinder& bind, ForwardMode mode) {
  const auto& cfg = params.config;
  if (moving.rows() != fixed.rows()) throw std::invalid_argument("moving and fixed differ in size");
  if (moving.cols() + fixed.cols() != cfg.in_channels) {
    throw std::invalid_argument("U-Net expects " + std::to_string(cfg.in_channels) +
                                " input channels, got " +
                                std::to_string(moving.cols() + fixed.cols()));
  }
  auto x = ad::hcat({moving, fixed});
  auto f1 = block(x, params.encoder[0], *bases.full, bind, mode);
  auto f2 = block(f1, params.encoder[1], *bases.half, bind, mode);
  auto f3 = block(f2, params.encoder[2], *bases.quarter, bind, mode);
  auto g = f3;
  if (cfg.use_graph) {
    g = ad_ops::gat(g, bind(params.graph[0].W), bind(params.graph[0].a), *bases.graph, cfg.heads,
                    params.graph[0].leaky_slope);
    g = ad_ops::junction(g, cfg.junction);
    g = ad_ops::gat(g, bind(params.graph[1].W), bind(params.graph[1].a), *bases.graph, cfg.heads,
                    params.graph[1].leaky_slope);
  }
  auto d2 = block(ad::hcat({g, f2}), params.decoder[0], *bases.half, bind, mode);
  auto d1 = block(ad::hcat({d2, f1}), params.decoder[1], *bases.full, bind, mode);
  auto logits = ad_ops::zonal_convolve(d1, bind(params.head.filter.h),
                                       bind(params.head.filter.alpha), *bases.full,
                                       bases.full->bandwidth);
  return ad_ops::batch_norm(logits, bind(params.head.bn.gamma), bind(params.head.bn.beta),
                            params.head.bn, NormMode::kAffine, false);
}

Matrix unet_forward(const SphericalSignal& moving, const SphericalSignal& fixed,
                    UNetParams& params, const UNetBases& bases) {
  validate_signal(moving);
  validate_signal(fixed);
  if (moving.level != fixed.level || moving.level != params.config.mesh_level) {
    throw std::invalid_argument("moving/fixed levels must both equal the network mesh level " +
                                std::to_string(params.config.mesh_level));
  }
  ad::Tape tape;
  ad::ParamBinder bind(tape, false);
  auto out = unet_forward(tape.constant(moving.values), tape.constant(fixed.values), params, bases,
                          bind, ForwardMode{});
  return out.value();
}

LabelReadout LabelReadout::make(const ControlGrid& grid, int mesh_level, int match_dim) {
  const FaceLocator& loc = cached_locator(mesh_level);
  LabelReadout r;
  r.mesh_level = mesh_level;
  r.match_dim = match_dim;
  r.samples.reserve(grid.num_controls() * grid.num_labels());
  for (std::size_t c = 0; c < grid.num_controls(); ++c)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(grid.num_labels()); ++j)
      r.samples.push_back(loc.locate(grid.label_positions[c].row(j).transpose()));
  return r;
}

Matrix label_logits(const Matrix& head_out, const ControlGrid& grid, const UNetConfig& config,
                    const LabelReadout* readout) {
  ad::Tape tape;
  return ad_ops::label_logits(tape.constant(head_out), grid, config, readout).value();
}

DeformationProbabilities predict_probabilities(const Matrix& logits, const ControlGrid& grid) {
  const auto nc = static_cast<Eigen::Index>(grid.num_controls());
  if (logits.rows() < nc) {
    throw std::invalid_argument("logits have " + std::to_string(logits.rows()) + " rows, need " +
                                std::to_string(nc));
  }
  if (logits.cols() != static_cast<Eigen::Index>(grid.num_labels())) {
    throw std::invalid_argument("logits have " + std::to_string(logits.cols()) +
                                " columns for " + std::to_string(grid.num_labels()) + " labels");
  }
  if (!logits.allFinite()) throw NumericError("logits contain non-finite values");
  ad::Tape tape;
  return {ad::softmax_rows(ad::top_rows(tape.constant(logits), nc)).value()};
}

Points argmax_deformation(const DeformationProbabilities& probs, const ControlGrid& grid) {
  const auto nc = grid.num_controls();
  if (static_cast<std::size_t>(probs.Q.rows()) != nc ||
      static_cast<std::size_t>(probs.Q.cols()) != grid.num_labels()) {
    throw std::invalid_argument("probability matrix shape does not match control grid");
  }
  Points out(static_cast<Eigen::Index>(nc), 3);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.Q.cols(); ++j)
      if (probs.Q(row, j) > probs.Q(row, best)) best = j;
    out.row(row) = grid.label_positions[c].row(best);
  }
  return out;
}

Points soft_deformation(const DeformationProbabilities& probs, const ControlGrid& grid) {
  ad::Tape tape;
  return ad_ops::soft_deformation(tape.constant(probs.Q), grid).value();
}

namespace ad_ops {

ad::Var label_logits(ad::Var head_out, const ControlGrid& grid, const UNetConfig& config,
                     const LabelReadout* readout) {
  const auto nc = static_cast<Eigen::Index>(grid.num_controls());
  const auto nl = static_cast<Eigen::Index>(grid.num_labels());
  if (head_out.cols() != config.head_channels()) {
    throw std::invalid_argument("head output has " + std::to_string(head_out.cols()) +
                                " channels, expected " + std::to_string(config.head_channels()));
  }
  if (head_out.rows() < nc) throw std::invalid_argument("head output has fewer rows than controls");
  if (config.label_head == LabelHead::kDirect) return ad::top_rows(head_out, nc);

  if (readout == nullptr || readout->samples.size() != static_cast<std::size_t>(nc * nl) ||
      readout->match_dim != config.match_dim) {
    throw std::invalid_argument("matching head needs a label readout built for this grid");
  }
  const Eigen::Index K = config.match_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(K));
  const Matrix& H = head_out.value();
  // Keys sampled at every label position.
  auto keys = std::make_shared<Matrix>(nc * nl, K);
  for (Eigen::Index s = 0; s < nc * nl; ++s) {
    const auto& smp = readout->samples[static_cast<std::size_t>(s)];
    keys->row(s).setZero();
    for (int t = 0; t < 3; ++t) keys->row(s) += smp.weights[t] * H.block(smp.corners[t], K, 1, K);
  }
  Matrix out(nc, nl);
  for (Eigen::Index c = 0; c < nc; ++c)
    for (Eigen::Index j = 0; j < nl; ++j)
      out(c, j) = scale * H.block(c, 0, 1, K).cwiseProduct(keys->row(c * nl + j)).sum();
  return head_out.tape()->record(
      std::move(out), {head_out}, [head_out, keys, readout, nc, nl, K, scale](ad::Tape& t, const Matrix& g) {
        const Matrix& H = head_out.value();
        Matrix gh = Matrix::Zero(H.rows(), H.cols());
        for (Eigen::Index c = 0; c < nc; ++c) {
          for (Eigen::Index j = 0; j < nl; ++j) {
            const double gc = scale * g(c, j);
            if (gc == 0.0) continue;
            gh.block(c, 0, 1, K) += gc * keys->row(c * nl + j);
            const auto& smp = readout->samples[static_cast<std::size_t>(c * nl + j)];
            for (int k = 0; k < 3; ++k)
              gh.block(smp.corners[k], K, 1, K) += (gc * smp.weights[k]) * H.block(c, 0, 1, K);
          }
        }
        t.accumulate(head_out, gh);
      });
}

ad::Var soft_deformation(ad::Var Q, const ControlGrid& grid) {
  using Dual = Eigen::AutoDiffScalar<Eigen::Vector3d>;
  const auto nc = grid.num_controls();
  const auto nl = static_cast<Eigen::Index>(grid.num_labels());
  if (static_cast<std::size_t>(Q.rows()) != nc || Q.cols() != nl) {
    throw std::invalid_argument("probability matrix shape does not match control grid");
  }
  if (nl < 2) throw std::invalid_argument("soft deformation needs at least two labels");
  const double kappa_scale = static_cast<double>(nl) / static_cast<double>(nl - 1);

  Matrix out(static_cast<Eigen::Index>(nc), 3);
  auto jac = std::make_shared<std::vector<Mat3>>(nc);
  auto mean_rho = std::make_shared<std::vector<Vec3>>(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    const Points& rho = grid.label_rotations[c];
    const Vec3 rbar = rho.colwise().mean().transpose();
    (*mean_rho)[c] = rbar;
    const RowVector q = Q.value().row(row);
    const double kappa = kappa_scale * (1.0 - q.squaredNorm());
    // A constant row is exactly motionless; the formula only gets there up
    // to rounding.
    const Vec3 r = q.maxCoeff() == q.minCoeff() ? Vec3::Zero()
                                                : Vec3((q * rho).transpose() - kappa * rbar);
    geometry::V3<Dual> rd;
    for (int d = 0; d < 3; ++d) rd[d] = Dual(r[d], 3, d);
    const auto moved = geometry::rotate_by_vector<Dual>(
        rd, grid.control_positions.row(row).transpose().cast<Dual>());
    for (int d = 0; d < 3; ++d) {
      out(row, d) = moved[d].value();
      (*jac)[c].row(d) = moved[d].derivatives().transpose();
    }
    // A one-hot row lands on its label exactly, as argmax_deformation does.
    Eigen::Index hot = 0;
    if (q.maxCoeff(&hot) == 1.0 && q.squaredNorm() == 1.0) {
      out.row(row) = grid.label_positions[c].row(hot);
    }
  }
  const ControlGrid* g = &grid;
  return Q.tape()->record(std::move(out), {Q},
                          [Q, g, jac, mean_rho, kappa_scale](ad::Tape& t, const Matrix& go) {
                            Matrix gq(Q.rows(), Q.cols());
                            for (Eigen::Index c = 0; c < Q.rows(); ++c) {
                              const auto cc = static_cast<std::size_t>(c);
                              const Vec3 gr = (*jac)[cc].transpose() * go.row(c).transpose();
                              const Vector along = g->label_rotations[cc] * gr;
                              const double rbar_dot = (*mean_rho)[cc].dot(gr);
                              gq.row(c) = along.transpose() +
                                          2.0 * kappa_scale * rbar_dot * Q.value().row(c);
                            }
                            t.accumulate(Q, gq);
                          });
}

}  // namespace ad_ops
}  // namespace sphreg
