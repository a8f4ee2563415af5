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

#include "sphreg/shconv.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace sphreg {

double zonal_normalization(int l) {
  return std::sqrt(4.0 * std::numbers::pi / (2.0 * l + 1.0));
}

ZonalFilter make_zonal_filter(int in_channels, int out_channels, int bandwidth) {
  if (in_channels < 1 || out_channels < 1 || bandwidth < 0) {
    throw std::invalid_argument("zonal filter needs positive channel counts and L >= 0");
  }
  ZonalFilter f;
  f.in_channels = in_channels;
  f.out_channels = out_channels;
  f.bandwidth = bandwidth;
  f.h = Matrix::Zero(in_channels * out_channels, bandwidth + 1);
  f.alpha = Matrix::Zero(out_channels, in_channels);
  return f;
}

void init_zonal_filter(ZonalFilter& filter, std::mt19937_64& rng) {
  const double h_bound = 1.0 / std::sqrt((filter.bandwidth + 1.0) * filter.in_channels);
  const double a_bound = 1.0 / std::sqrt(static_cast<double>(filter.in_channels));
  std::uniform_real_distribution<double> h_dist(-h_bound, h_bound);
  std::uniform_real_distribution<double> a_dist(-a_bound, a_bound);
  for (Eigen::Index r = 0; r < filter.h.rows(); ++r)
    for (Eigen::Index c = 0; c < filter.h.cols(); ++c) filter.h(r, c) = h_dist(rng);
  for (Eigen::Index r = 0; r < filter.alpha.rows(); ++r)
    for (Eigen::Index c = 0; c < filter.alpha.cols(); ++c) filter.alpha(r, c) = a_dist(rng);
}

BatchNormParams make_batch_norm(int channels) {
  BatchNormParams bn;
  bn.gamma = Matrix::Ones(1, channels);
  bn.beta = Matrix::Zero(1, channels);
  bn.running_mean = Matrix::Zero(1, channels);
  bn.running_var = Matrix::Ones(1, channels);
  return bn;
}

BlockParams make_block(int in_channels, int out_channels, int bandwidth, std::mt19937_64& rng) {
  BlockParams p{make_zonal_filter(in_channels, out_channels, bandwidth),
                make_batch_norm(out_channels)};
  init_zonal_filter(p.filter, rng);
  return p;
}

namespace {

void check_filter(const ZonalFilter& f, Eigen::Index in_cols, const HarmonicBasis& basis,
                  int bandwidth_out) {
  if (f.h.rows() != static_cast<Eigen::Index>(f.in_channels) * f.out_channels ||
      f.h.cols() != f.bandwidth + 1 || f.alpha.rows() != f.out_channels ||
      f.alpha.cols() != f.in_channels) {
    throw std::invalid_argument("zonal filter tensors have inconsistent shapes");
  }
  if (in_cols != f.in_channels) {
    throw std::invalid_argument("input has " + std::to_string(in_cols) +
                                " channels, filter expects " + std::to_string(f.in_channels));
  }
  if (basis.bandwidth != f.bandwidth) {
    throw std::invalid_argument("basis bandwidth " + std::to_string(basis.bandwidth) +
                                " differs from filter bandwidth " + std::to_string(f.bandwidth));
  }
  if (bandwidth_out < 0 || bandwidth_out > f.bandwidth) {
    throw std::invalid_argument("output bandwidth " + std::to_string(bandwidth_out) +
                                " exceeds filter bandwidth " + std::to_string(f.bandwidth));
  }
}

// Spectral multiplier of pair (o, i) over the first (L_out+1)^2 coefficients.
Vector pair_multiplier(const Matrix& h, const Matrix& alpha, int o, int i, int in_channels,
                       int bandwidth_out) {
  Vector s(coefficient_count(bandwidth_out));
  const auto row = static_cast<Eigen::Index>(o) * in_channels + i;
  for (int l = 0; l <= bandwidth_out; ++l) {
    const double c = zonal_normalization(l);
    const double v = c * (h(row, l) - alpha(o, i) / c);
    s.segment(l * l, 2 * l + 1).setConstant(v);
  }
  return s;
}

struct ConvForward {
  Matrix out;
  Matrix spectra;  // K x C_in forward coefficients
};

ConvForward convolve_values(const Matrix& x, const Matrix& h, const Matrix& alpha,
                            int in_channels, int out_channels, const HarmonicBasis& basis,
                            int bandwidth_out) {
  const auto k = static_cast<Eigen::Index>(coefficient_count(bandwidth_out));
  ConvForward r;
  r.spectra = basis.forward_operator.topRows(k) * x;
  Matrix g = Matrix::Zero(k, out_channels);
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < in_channels; ++i)
      g.col(o) += pair_multiplier(h, alpha, o, i, in_channels, bandwidth_out)
                      .cwiseProduct(r.spectra.col(i));
  r.out = basis.Y.leftCols(k) * g + x * alpha.transpose();
  return r;
}

}  // namespace

SphericalSignal zonal_convolve(const SphericalSignal& signal, const ZonalFilter& filter,
                               const HarmonicBasis& basis_in, int bandwidth_out) {
  validate_signal(signal);
  if (signal.level != basis_in.mesh_level) {
    throw std::invalid_argument("signal level " + std::to_string(signal.level) +
                                " does not match basis level " +
                                std::to_string(basis_in.mesh_level));
  }
  check_filter(filter, signal.values.cols(), basis_in, bandwidth_out);
  return {signal.level, convolve_values(signal.values, filter.h, filter.alpha, filter.in_channels,
                                        filter.out_channels, basis_in, bandwidth_out)
                            .out};
}

SpectralCoeffs spectral_pool(const SpectralCoeffs& coeffs) {
  if (coeffs.bandwidth < 1) throw std::invalid_argument("spectral_pool needs L >= 1");
  const int half = coeffs.bandwidth / 2;
  return {half, coeffs.coeffs.topRows(coefficient_count(half))};
}

SpectralCoeffs spectral_unpool(const SpectralCoeffs& coeffs, int bandwidth_new) {
  if (bandwidth_new < coeffs.bandwidth) {
    throw std::invalid_argument("spectral_unpool target bandwidth " + std::to_string(bandwidth_new) +
                                " is below current bandwidth " +
                                std::to_string(coeffs.bandwidth));
  }
  SpectralCoeffs out{bandwidth_new,
                     Matrix::Zero(coefficient_count(bandwidth_new), coeffs.coeffs.cols())};
  out.coeffs.topRows(coeffs.coeffs.rows()) = coeffs.coeffs;
  return out;
}

SphericalSignal shconv_block(const SphericalSignal& signal, BlockParams& params,
                             const HarmonicBasis& basis, int bandwidth_out, bool training_mode,
                             bool update_stats) {
  validate_signal(signal);
  ad::Tape tape;
  auto x = tape.constant(signal.values);
  auto y = ad_ops::zonal_convolve(x, tape.constant(params.filter.h),
                                  tape.constant(params.filter.alpha), basis, bandwidth_out);
  y = ad_ops::batch_norm(y, tape.constant(params.bn.gamma), tape.constant(params.bn.beta),
                         params.bn, training_mode ? NormMode::kBatch : NormMode::kRunning,
                         training_mode && update_stats);
  y = ad::relu(y);
  return {signal.level, y.value()};
}

namespace ad_ops {

ad::Var zonal_convolve(ad::Var x, ad::Var h, ad::Var alpha, const HarmonicBasis& basis_in,
                       int bandwidth_out) {
  ZonalFilter shape;
  shape.in_channels = static_cast<int>(alpha.cols());
  shape.out_channels = static_cast<int>(alpha.rows());
  shape.bandwidth = static_cast<int>(h.cols()) - 1;
  shape.h = h.value();
  shape.alpha = alpha.value();
  check_filter(shape, x.cols(), basis_in, bandwidth_out);
  if (x.rows() != basis_in.Y.rows()) {
    throw std::invalid_argument("input rows do not match basis sample count");
  }

  const int cin = shape.in_channels, cout = shape.out_channels;
  auto fwd = convolve_values(x.value(), h.value(), alpha.value(), cin, cout, basis_in,
                             bandwidth_out);
  const Matrix spectra = std::move(fwd.spectra);
  const HarmonicBasis* basis = &basis_in;

  return x.tape()->record(
      std::move(fwd.out), {x, h, alpha},
      [x, h, alpha, spectra, basis, cin, cout, bandwidth_out](ad::Tape& t, const Matrix& g_out) {
        const auto k = static_cast<Eigen::Index>(coefficient_count(bandwidth_out));
        const Matrix g_spec = basis->Y.leftCols(k).transpose() * g_out;  // K x C_out
        Matrix g_spectra = Matrix::Zero(k, cin);
        Matrix g_h = Matrix::Zero(h.rows(), h.cols());
        Matrix g_alpha = g_out.transpose() * x.value();
        for (int o = 0; o < cout; ++o) {
          for (int i = 0; i < cin; ++i) {
            const Vector s = pair_multiplier(h.value(), alpha.value(), o, i, cin, bandwidth_out);
            g_spectra.col(i) += s.cwiseProduct(g_spec.col(o));
            const Vector gs = spectra.col(i).cwiseProduct(g_spec.col(o));
            const auto row = static_cast<Eigen::Index>(o) * cin + i;
            for (int l = 0; l <= bandwidth_out; ++l) {
              const double seg = gs.segment(l * l, 2 * l + 1).sum();
              g_h(row, l) += zonal_normalization(l) * seg;
              g_alpha(o, i) -= seg;
            }
          }
        }
        if (t.requires_grad(x)) {
          t.accumulate(x, basis->forward_operator.topRows(k).transpose() * g_spectra +
                              g_out * alpha.value());
        }
        t.accumulate(h, g_h);
        t.accumulate(alpha, g_alpha);
      });
}

ad::Var batch_norm(ad::Var x, ad::Var gamma, ad::Var beta, BatchNormParams& state, NormMode mode,
                   bool update_stats) {
  const Eigen::Index n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) {
    throw std::invalid_argument("batch norm parameters do not match channel count");
  }
  const RowVector g = gamma.value().row(0);
  const RowVector b = beta.value().row(0);

  if (mode == NormMode::kAffine) {
    Matrix out = (x.value().array().rowwise() * g.array()).rowwise() + b.array();
    return x.tape()->record(std::move(out), {x, gamma, beta},
                            [x, gamma, beta](ad::Tape& t, const Matrix& go) {
                              if (t.requires_grad(x))
                                t.accumulate(x, go.array().rowwise() *
                                                    gamma.value().row(0).array());
                              t.accumulate(gamma, (go.cwiseProduct(x.value())).colwise().sum());
                              t.accumulate(beta, go.colwise().sum());
                            });
  }

  RowVector mean, inv_std;
  if (mode == NormMode::kBatch) {
    if (n < 2) throw std::invalid_argument("batch statistics need at least two rows");
    mean = x.value().colwise().mean();
    const Matrix centered = x.value().rowwise() - mean;
    const RowVector var = centered.cwiseAbs2().colwise().sum() / static_cast<double>(n);
    inv_std = (var.array() + state.eps).rsqrt().matrix();
    if (update_stats) {
      const RowVector unbiased = var * (static_cast<double>(n) / static_cast<double>(n - 1));
      state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
      state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * unbiased;
    }
  } else {
    mean = state.running_mean.row(0);
    inv_std = (state.running_var.row(0).array() + state.eps).rsqrt().matrix();
  }
  Matrix xhat = (x.value().rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
  const bool batch = mode == NormMode::kBatch;
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, batch, n](ad::Tape& t, const Matrix& go) {
        t.accumulate(gamma, go.cwiseProduct(xhat).colwise().sum());
        t.accumulate(beta, go.colwise().sum());
        if (!t.requires_grad(x)) return;
        const Matrix gxhat = go.array().rowwise() * gamma.value().row(0).array();
        if (!batch) {
          t.accumulate(x, gxhat.array().rowwise() * inv_std.array());
          return;
        }
        const RowVector sum_g = gxhat.colwise().sum();
        const RowVector sum_gx = gxhat.cwiseProduct(xhat).colwise().sum();
        Matrix gx = (gxhat * static_cast<double>(n)).rowwise() - sum_g;
        gx -= (xhat.array().rowwise() * sum_gx.array()).matrix();
        gx = gx.array().rowwise() * (inv_std.array() / static_cast<double>(n));
        t.accumulate(x, gx);
      });
}

}  // namespace ad_ops
}  // namespace sphreg
