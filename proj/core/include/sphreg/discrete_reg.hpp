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

#include <array>
#include <memory>
#include <random>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/control_grid.hpp"
#include "sphreg/graph_attention.hpp"
#include "sphreg/icosphere.hpp"
#include "sphreg/shconv.hpp"
#include "sphreg/sht.hpp"

namespace sphreg {

// How per-control label logits are read from the network output.
enum class LabelHead {
  // One output channel per label slot; logits are the prefix rows.
  kDirect,
  // The head emits a query embedding E and a key embedding G (match_dim
  // channels each); logit(c, j) = <E(c), G(label_cj)> / sqrt(match_dim), with
  // G sampled at the label position.
  kMatching,
};

struct UNetConfig {
  int mesh_level = 3;
  int bandwidth = 16;   // L; encoder runs at L, L/2, L/4
  int channels = 8;     // C; encoder widths C, 2C, 4C
  int heads = 4;
  int num_labels = 7;   // N_l
  int in_channels = 2;  // moving + fixed feature channels
  bool use_graph = true;
  JunctionActivation junction = JunctionActivation::kElu;
  LabelHead label_head = LabelHead::kMatching;
  int match_dim = 8;

  int head_channels() const { return label_head == LabelHead::kDirect ? num_labels : 2 * match_dim; }
};

void validate_unet_config(const UNetConfig& config);

// Spectral U-Net: three encoder blocks, the attention bottleneck, two
// decoder blocks fed by skip concatenations, and a logits head whose
// normalization is a plain per-channel affine map.
struct UNetParams {
  UNetConfig config;
  std::array<BlockParams, 3> encoder;
  std::array<GatLayer, 2> graph;
  std::array<BlockParams, 2> decoder;
  BlockParams head;
};

// `zero_head` zeroes the head filter so the initial logits are constant (for
// the matching head only the query half is zeroed, so the key half still
// receives gradient).
UNetParams init_unet(const UNetConfig& config, std::mt19937_64& rng, bool zero_head = true);

// Harmonic bases for the three bandwidths and the attention graph.
struct UNetBases {
  std::shared_ptr<const HarmonicBasis> full;
  std::shared_ptr<const HarmonicBasis> half;
  std::shared_ptr<const HarmonicBasis> quarter;
  std::shared_ptr<const Neighborhoods> graph;

  static UNetBases make(int mesh_level, int bandwidth);
};

struct ForwardMode {
  bool training = false;      // batch statistics instead of running statistics
  bool update_stats = false;  // fold batch statistics into running statistics
};

ad::Var unet_forward(ad::Var moving, ad::Var fixed, UNetParams& params, const UNetBases& bases,
                     ad::ParamBinder& bind, ForwardMode mode);

// Inference-mode head output (N x head_channels).
Matrix unet_forward(const SphericalSignal& moving, const SphericalSignal& fixed,
                    UNetParams& params, const UNetBases& bases);

// Barycentric location of every label position on the network mesh, row
// c * N_l + j.
struct LabelReadout {
  int mesh_level = 0;
  int match_dim = 0;
  std::vector<BarycentricSample> samples;

  static LabelReadout make(const ControlGrid& grid, int mesh_level, int match_dim);
};

struct DeformationProbabilities {
  Matrix Q;  // N_c x N_l, rows on the simplex
};

// Prefix rows at the control level, then row softmax.
DeformationProbabilities predict_probabilities(const Matrix& logits, const ControlGrid& grid);

// Label position of the most probable slot per control; ties go to the
// lowest slot, so slot 0 (no motion) wins ties.
Points argmax_deformation(const DeformationProbabilities& probs, const ControlGrid& grid);

// Differentiable relaxation of the label choice. In rotation-vector space
//   r_c = sum_j Q_cj rho_cj - kappa(Q_c) mean_j rho_cj,
//   kappa(q) = N_l / (N_l - 1) * (1 - |q|^2),
// so a one-hot row selects its label and a uniform row yields no motion.
Points soft_deformation(const DeformationProbabilities& probs, const ControlGrid& grid);

// N_c x N_l logits from the head output: prefix rows for the direct head,
// embedding correlation for the matching head.
Matrix label_logits(const Matrix& head_out, const ControlGrid& grid, const UNetConfig& config,
                    const LabelReadout* readout);

namespace ad_ops {

ad::Var label_logits(ad::Var head_out, const ControlGrid& grid, const UNetConfig& config,
                     const LabelReadout* readout);

ad::Var soft_deformation(ad::Var Q, const ControlGrid& grid);

}  // namespace ad_ops
}  // namespace sphreg
