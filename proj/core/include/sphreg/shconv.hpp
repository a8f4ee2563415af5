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

#include <random>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/icosphere.hpp"
#include "sphreg/sht.hpp"

namespace sphreg {

// C(l) = sqrt(4 pi / (2l + 1)).
double zonal_normalization(int l);

// Axially symmetric spectral filter with a full-bandwidth pass-through.
//
// `h` row o * in_channels + i holds the zonal coefficients h_l0, l = 0..L,
// for the (output o, input i) pair; `alpha` (out x in) is the pass-through
// weight of the same pair.
struct ZonalFilter {
  int in_channels = 0;
  int out_channels = 0;
  int bandwidth = 0;
  Matrix h;
  Matrix alpha;
};

ZonalFilter make_zonal_filter(int in_channels, int out_channels, int bandwidth);
// h ~ U(+-1/sqrt((L+1) C_in)), alpha ~ U(+-1/sqrt(C_in)).
void init_zonal_filter(ZonalFilter& filter, std::mt19937_64& rng);

// Per-channel tensors are 1 x C.
struct BatchNormParams {
  Matrix gamma;
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

BatchNormParams make_batch_norm(int channels);

struct BlockParams {
  ZonalFilter filter;
  BatchNormParams bn;
};

BlockParams make_block(int in_channels, int out_channels, int bandwidth, std::mt19937_64& rng);

// Spectral filtering of every (output, input) channel pair:
//   out_o = sum_i [ sum_{l <= L_out} C(l) (h_oil - alpha_oi / C(l)) f_i,lm Y_lm + alpha_oi f_i ].
// The forward transform uses `basis_in`; its bandwidth must equal the filter's.
SphericalSignal zonal_convolve(const SphericalSignal& signal, const ZonalFilter& filter,
                               const HarmonicBasis& basis_in, int bandwidth_out);

// Truncation to floor(L / 2).
SpectralCoeffs spectral_pool(const SpectralCoeffs& coeffs);
// Zero-padding to `bandwidth_new`.
SpectralCoeffs spectral_unpool(const SpectralCoeffs& coeffs, int bandwidth_new);

enum class NormMode {
  kBatch,    // statistics of the current input
  kRunning,  // stored running statistics
  kAffine,   // gamma * x + beta, no normalization
};

// Block = zonal_convolve -> batch normalization -> ReLU. In training mode the
// batch statistics are used and, if `update_stats`, folded into the running
// statistics with the block's momentum.
SphericalSignal shconv_block(const SphericalSignal& signal, BlockParams& params,
                             const HarmonicBasis& basis, int bandwidth_out, bool training_mode,
                             bool update_stats);

namespace ad_ops {

// Differentiable zonal convolution of an N x C_in input; `h` and `alpha`
// have the ZonalFilter layouts.
ad::Var zonal_convolve(ad::Var x, ad::Var h, ad::Var alpha, const HarmonicBasis& basis_in,
                       int bandwidth_out);

// Differentiable per-column normalization. In kBatch mode with
// `update_stats`, `state` running statistics are updated.
ad::Var batch_norm(ad::Var x, ad::Var gamma, ad::Var beta, BatchNormParams& state, NormMode mode,
                   bool update_stats);

}  // namespace ad_ops
}  // namespace sphreg
