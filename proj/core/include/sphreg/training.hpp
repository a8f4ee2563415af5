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

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/control_grid.hpp"
#include "sphreg/crf.hpp"
#include "sphreg/discrete_reg.hpp"
#include "sphreg/icosphere.hpp"
#include "sphreg/warp.hpp"

namespace sphreg {

enum class CascadeMode { kCascaded, kIndependent };

struct TrainConfig {
  int mesh_level = 3;
  int bandwidth = 16;
  int channels = 8;
  int heads = 4;
  int coarse_level = 1;
  int fine_level = 2;
  int num_labels = 7;
  int label_hops = 2;
  int crf_iters = 5;
  double crf_weight = 1.0;
  double lambda1 = 0.01;
  double lambda2 = 0.01;
  double learning_rate = 1e-2;
  int epochs = 10;
  int batch_size = 1;
  std::uint64_t seed = 1;
  bool use_graph = true;
  bool use_crf = true;
  bool use_fine = true;
  CascadeMode cascade_mode = CascadeMode::kCascaded;
  LabelHead label_head = LabelHead::kMatching;
  int match_dim = 8;
  // Synthetic data generation.
  int warp_level = 0;             // control level of each random step
  int warp_steps = 4;             // composed random steps per ground truth
  double warp_amplitude = 0.12;   // std of control moves per step (radians)
  double noise_amplitude = 0.1;  // perturbation std relative to signal std

  // key=value lines, one per field, in a fixed order.
  std::string to_text() const;
  // Applies one key=value assignment; throws std::invalid_argument for an
  // unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  // Parses a config file body; '#' starts a comment, blank lines are skipped.
  static TrainConfig from_text(const std::string& text, TrainConfig base);
  static TrainConfig from_text(const std::string& text);

  void validate() const;
  UNetConfig unet_config() const;
};

std::vector<std::string> train_config_keys();

// warp_signal(moving, ground_truth) matches fixed up to the added noise.
struct SyntheticPair {
  SphericalSignal fixed;
  SphericalSignal moving;
  DeformationField ground_truth;
};

// Random band-limited signal (degree <= bandwidth), coefficient std
// 1 / (1 + l), scaled to zero mean and unit standard deviation.
SphericalSignal random_bandlimited_signal(int level, int bandwidth, std::mt19937_64& rng);

// Densified random tangent moves (std `amplitude`) of the coarse control points.
DeformationField random_smooth_field(int mesh_level, int control_level, double amplitude,
                                     std::mt19937_64& rng);

// Composition of `steps` independent random_smooth_field draws. Small steps
// keep the composed map fold-free while allowing large total motion.
DeformationField random_composed_field(int mesh_level, int control_level, double amplitude,
                                       int steps, std::mt19937_64& rng);

std::vector<SyntheticPair> synth_dataset(int n_pairs, const TrainConfig& config, std::uint64_t seed);

// Parameters of both registration scales.
struct CascadeParams {
  UNetParams coarse;
  UNetParams fine;
  CrfParams crf_coarse;
  CrfParams crf_fine;
};

struct NamedParam {
  std::string name;
  std::string family;  // h, alpha, bn, gat_W, gat_a, mu, crf (empty for buffers)
  Matrix* value;
  bool trainable;
};

// Every stored tensor in a fixed order; running statistics are buffers.
std::vector<NamedParam> list_parameters(CascadeParams& params);

// Grids, bases and densify plans shared by all forward passes of a config.
struct CascadeContext {
  TrainConfig config;
  const Icosphere* mesh = nullptr;
  UNetBases bases;
  ControlGrid coarse_grid;
  ControlGrid fine_grid;
  std::shared_ptr<const DensifyPlan> coarse_plan;
  std::shared_ptr<const DensifyPlan> fine_plan;
  CrfPairTable coarse_pairs;
  CrfPairTable fine_pairs;
  LabelReadout coarse_readout;
  LabelReadout fine_readout;

  static std::shared_ptr<const CascadeContext> make(const TrainConfig& config);
};

CascadeParams init_cascade(const CascadeContext& ctx, std::mt19937_64& rng, bool zero_head = true);

enum class DeformMode {
  kSoft,    // differentiable relaxation of the label choice
  kArgmax,  // hard label selection
};

struct PassOptions {
  bool training = false;
  bool update_stats = false;
  DeformMode deform = DeformMode::kSoft;
};

// Recorded cascade. Fields named *_field are dense targets at the mesh level;
// total = fine followed by coarse, i.e. warp(moving, total) applies both.
struct CascadeGraph {
  ad::Var Q_coarse, Q_fine;
  ad::Var D_coarse, D_fine;  // control targets
  ad::Var coarse_field, fine_field, total_field;
  ad::Var warped;
  ad::Var loss, loss_sim, loss_reg;
};

CascadeGraph record_cascade(ad::Tape& tape, ad::ParamBinder& bind, const SphericalSignal& moving,
                            const SphericalSignal& fixed, CascadeParams& params,
                            const CascadeContext& ctx, PassOptions options);

struct PhaseTimes {
  double forward = 0.0;
  double crf = 0.0;
  double densify = 0.0;
  double warp = 0.0;
};

struct CascadeOutput {
  SphericalSignal warped;
  DeformationField coarse_field;
  DeformationField fine_field;
  DeformationField total_field;
  DeformationProbabilities Q_coarse;
  DeformationProbabilities Q_fine;
  PhaseTimes times;
};

// Inference pass (running statistics, no gradient).
CascadeOutput forward_cascade(const SphericalSignal& moving, const SphericalSignal& fixed,
                              CascadeParams& params, const CascadeContext& ctx,
                              DeformMode deform = DeformMode::kSoft);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double loss_sim = 0.0;
  double loss_reg = 0.0;
  double cc_val = 0.0;
};

std::string format_log_csv(const std::vector<EpochLog>& log);

struct TrainResult {
  CascadeParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const CascadeParams&)>;

// Adam on the per-pair losses averaged over each batch. `validation` may be
// empty, in which case cc_val is measured on the training pairs.
TrainResult train(const CascadeContext& ctx, const std::vector<SyntheticPair>& dataset,
                  const std::vector<SyntheticPair>& validation = {},
                  const EpochCallback& on_epoch = {});

// Mean Pearson correlation of registered (or unregistered) pairs.
double mean_registered_cc(CascadeParams& params, const CascadeContext& ctx,
                          const std::vector<SyntheticPair>& pairs, DeformMode deform);
double mean_unregistered_cc(const std::vector<SyntheticPair>& pairs);

struct GradientCheckEntry {
  std::string name;
  std::string family;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientCheckResult {
  std::vector<GradientCheckEntry> entries;
  double max_rel_error = 0.0;
  double gradient_norm = 0.0;  // over all trainable parameters
};

// |a - b| / max(|a|, |b|, 1e-7).
double relative_error(double a, double b);

// Central differences (step `h`) against the recorded gradient of the total
// training loss at `per_family` random coordinates of each active family.
// Batch statistics are used without updating the running ones.
GradientCheckResult gradient_check(CascadeParams& params, const SyntheticPair& pair,
                                   const CascadeContext& ctx, int per_family, std::uint64_t seed,
                                   double h = 1e-5);

}  // namespace sphreg
