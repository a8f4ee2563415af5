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

#include "sphreg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <utility>

#include "sphreg/geometry.hpp"
#include "sphreg/metrics.hpp"
#include "sphreg/sht.hpp"

namespace sphreg {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not an integer");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(v)) {
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a finite number");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a boolean");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define INT_FIELD(name)                                                                      \
  Field {                                                                                    \
    #name, [](const TrainConfig& c) { return std::to_string(c.name); },                      \
        [](TrainConfig& c, const std::string& v) { c.name = parse_int(#name, v); }           \
  }
#define DOUBLE_FIELD(name)                                                                   \
  Field {                                                                                    \
    #name, [](const TrainConfig& c) { return format_double(c.name); },                       \
        [](TrainConfig& c, const std::string& v) { c.name = parse_double(#name, v); }        \
  }
#define BOOL_FIELD(name)                                                                     \
  Field {                                                                                    \
    #name, [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); },      \
        [](TrainConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      INT_FIELD(mesh_level),
      INT_FIELD(bandwidth),
      INT_FIELD(channels),
      INT_FIELD(heads),
      INT_FIELD(coarse_level),
      INT_FIELD(fine_level),
      INT_FIELD(num_labels),
      INT_FIELD(label_hops),
      INT_FIELD(crf_iters),
      DOUBLE_FIELD(crf_weight),
      DOUBLE_FIELD(lambda1),
      DOUBLE_FIELD(lambda2),
      DOUBLE_FIELD(learning_rate),
      INT_FIELD(epochs),
      INT_FIELD(batch_size),
      Field{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
            [](TrainConfig& c, const std::string& v) {
              std::size_t used = 0;
              unsigned long long s = 0;
              try {
                if (!v.empty() && v[0] != '-') s = std::stoull(v, &used);
              } catch (const std::exception&) {
                used = 0;
              }
              if (used == 0 || used != v.size()) {
                throw std::invalid_argument("config key 'seed': '" + v + "' is not an unsigned integer");
              }
              c.seed = s;
            }},
      BOOL_FIELD(use_graph),
      BOOL_FIELD(use_crf),
      BOOL_FIELD(use_fine),
      Field{"cascade_mode",
            [](const TrainConfig& c) {
              return std::string(c.cascade_mode == CascadeMode::kCascaded ? "cascaded" : "independent");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "cascaded") {
                c.cascade_mode = CascadeMode::kCascaded;
              } else if (v == "independent") {
                c.cascade_mode = CascadeMode::kIndependent;
              } else {
                throw std::invalid_argument("cascade_mode must be 'cascaded' or 'independent', got '" +
                                            v + "'");
              }
            }},
      Field{"label_head",
            [](const TrainConfig& c) {
              return std::string(c.label_head == LabelHead::kMatching ? "matching" : "direct");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "matching") {
                c.label_head = LabelHead::kMatching;
              } else if (v == "direct") {
                c.label_head = LabelHead::kDirect;
              } else {
                throw std::invalid_argument("label_head must be 'matching' or 'direct', got '" + v + "'");
              }
            }},
      INT_FIELD(match_dim),
      INT_FIELD(warp_level),
      INT_FIELD(warp_steps),
      DOUBLE_FIELD(warp_amplitude),
      DOUBLE_FIELD(noise_amplitude),
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

std::vector<std::string> train_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::from_text(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " has no '='");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig TrainConfig::from_text(const std::string& text) { return from_text(text, TrainConfig{}); }

void TrainConfig::validate() const {
  validate_unet_config(unet_config());
  if (coarse_level < 0 || fine_level <= coarse_level || fine_level + 1 > kMaxIcosphereLevel) {
    throw std::invalid_argument("control levels must satisfy 0 <= coarse < fine < " +
                                std::to_string(kMaxIcosphereLevel));
  }
  if (fine_level > mesh_level) {
    throw std::invalid_argument("fine control level " + std::to_string(fine_level) +
                                " exceeds mesh level " + std::to_string(mesh_level));
  }
  if (label_hops < 1) throw std::invalid_argument("label_hops must be >= 1");
  if (crf_iters < 0 || crf_iters > kMaxCrfIterations) {
    throw std::invalid_argument("crf_iters must be in [0, " + std::to_string(kMaxCrfIterations) + "]");
  }
  if (crf_weight < 0.0) throw std::invalid_argument("crf_weight must be >= 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("lambda1/lambda2 must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (warp_level < 0 || warp_level > mesh_level) {
    throw std::invalid_argument("warp_level must be in [0, mesh_level]");
  }
  if (warp_steps < 1) throw std::invalid_argument("warp_steps must be >= 1");
  if (warp_amplitude < 0.0 || noise_amplitude < 0.0) {
    throw std::invalid_argument("synthetic amplitudes must be >= 0");
  }
}

UNetConfig TrainConfig::unet_config() const {
  UNetConfig u;
  u.mesh_level = mesh_level;
  u.bandwidth = bandwidth;
  u.channels = channels;
  u.heads = heads;
  u.num_labels = num_labels;
  u.in_channels = 2;
  u.use_graph = use_graph;
  u.label_head = label_head;
  u.match_dim = match_dim;
  return u;
}

SphericalSignal random_bandlimited_signal(int level, int bandwidth, std::mt19937_64& rng) {
  const Icosphere& mesh = cached_icosphere(level);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector coeffs(coefficient_count(bandwidth));
  for (int l = 0; l <= bandwidth; ++l)
    for (int m = -l; m <= l; ++m) coeffs[flat_index(l, m)] = normal(rng) / (1.0 + l);
  Vector values(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
    values[static_cast<Eigen::Index>(v)] = eval_real_sh_all(bandwidth, mesh.vertex(v)).dot(coeffs);
  values.array() -= values.mean();
  const double sd = std::sqrt(values.squaredNorm() / static_cast<double>(values.size()));
  if (sd > 0.0) values /= sd;
  return {level, values};
}

DeformationField random_smooth_field(int mesh_level, int control_level, double amplitude,
                                     std::mt19937_64& rng) {
  const Icosphere& coarse = cached_icosphere(control_level);
  std::normal_distribution<double> normal(0.0, 1.0);
  Points moved = coarse.vertices();
  for (Eigen::Index c = 0; c < moved.rows(); ++c) {
    const Vec3 p = moved.row(c).transpose();
    Vec3 g(normal(rng), normal(rng), normal(rng));
    if (amplitude == 0.0) continue;
    g *= amplitude;
    const Vec3 tangent = g - g.dot(p) * p;
    moved.row(c) = geometry::rotate_by_vector<double>(p.cross(tangent), p).normalized().transpose();
  }
  return densify(moved, build_label_sets(control_level, control_level + 1, 1), mesh_level);
}

DeformationField random_composed_field(int mesh_level, int control_level, double amplitude,
                                       int steps, std::mt19937_64& rng) {
  if (steps < 1) throw std::invalid_argument("random_composed_field needs steps >= 1");
  DeformationField field = random_smooth_field(mesh_level, control_level, amplitude, rng);
  for (int s = 1; s < steps; ++s) {
    field = compose(field, random_smooth_field(mesh_level, control_level, amplitude, rng));
  }
  return field;
}

std::vector<SyntheticPair> synth_dataset(int n_pairs, const TrainConfig& config, std::uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("synth_dataset needs n_pairs >= 1");
  config.validate();
  const Icosphere& mesh = cached_icosphere(config.mesh_level);
  const int band = config.bandwidth / 2;
  std::mt19937_64 rng(seed);
  std::vector<SyntheticPair> out;
  out.reserve(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    // fixed = moving pulled back through the ground truth, so warping the
    // noise-free moving signal with ground_truth reproduces fixed.
    SyntheticPair pair;
    pair.moving = random_bandlimited_signal(config.mesh_level, band, rng);
    pair.ground_truth = random_composed_field(config.mesh_level, config.warp_level,
                                              config.warp_amplitude, config.warp_steps, rng);
    pair.fixed = warp_signal(pair.moving, pair.ground_truth, mesh);
    const SphericalSignal noise = random_bandlimited_signal(config.mesh_level, band, rng);
    if (config.noise_amplitude > 0.0) pair.moving.values += config.noise_amplitude * noise.values;
    out.push_back(std::move(pair));
  }
  return out;
}

namespace {

void list_block(std::vector<NamedParam>& out, const std::string& prefix, BlockParams& b) {
  out.push_back({prefix + ".h", "h", &b.filter.h, true});
  out.push_back({prefix + ".alpha", "alpha", &b.filter.alpha, true});
  out.push_back({prefix + ".bn.gamma", "bn", &b.bn.gamma, true});
  out.push_back({prefix + ".bn.beta", "bn", &b.bn.beta, true});
  out.push_back({prefix + ".bn.running_mean", "", &b.bn.running_mean, false});
  out.push_back({prefix + ".bn.running_var", "", &b.bn.running_var, false});
}

void list_unet(std::vector<NamedParam>& out, const std::string& prefix, UNetParams& u) {
  for (std::size_t i = 0; i < u.encoder.size(); ++i)
    list_block(out, prefix + ".encoder" + std::to_string(i), u.encoder[i]);
  for (std::size_t i = 0; i < u.graph.size(); ++i) {
    const std::string g = prefix + ".graph" + std::to_string(i);
    out.push_back({g + ".W", "gat_W", &u.graph[i].W, u.config.use_graph});
    out.push_back({g + ".a", "gat_a", &u.graph[i].a, u.config.use_graph});
  }
  for (std::size_t i = 0; i < u.decoder.size(); ++i)
    list_block(out, prefix + ".decoder" + std::to_string(i), u.decoder[i]);
  list_block(out, prefix + ".head", u.head);
}

void list_crf(std::vector<NamedParam>& out, const std::string& prefix, CrfParams& c, bool active) {
  out.push_back({prefix + ".mu", "mu", &c.mu, active});
  out.push_back({prefix + ".sigma", "crf", &c.sigma, active});
  out.push_back({prefix + ".weight", "crf", &c.weight, active});
}

}  // namespace

std::vector<NamedParam> list_parameters(CascadeParams& params) {
  std::vector<NamedParam> out;
  list_unet(out, "coarse", params.coarse);
  list_unet(out, "fine", params.fine);
  const bool crf = params.crf_coarse.iterations > 0;
  list_crf(out, "coarse.crf", params.crf_coarse, crf);
  list_crf(out, "fine.crf", params.crf_fine, params.crf_fine.iterations > 0);
  return out;
}

std::shared_ptr<const CascadeContext> CascadeContext::make(const TrainConfig& config) {
  config.validate();
  auto ctx = std::make_shared<CascadeContext>();
  ctx->config = config;
  ctx->mesh = &cached_icosphere(config.mesh_level);
  ctx->bases = UNetBases::make(config.mesh_level, config.bandwidth);
  ctx->coarse_grid = build_label_sets(config.coarse_level, config.coarse_level + 1,
                                      config.label_hops, config.num_labels);
  ctx->fine_grid = build_label_sets(config.fine_level, config.fine_level + 1, config.label_hops,
                                    config.num_labels);
  ctx->coarse_plan = cached_densify_plan(config.coarse_level, config.mesh_level);
  ctx->fine_plan = cached_densify_plan(config.fine_level, config.mesh_level);
  ctx->coarse_pairs = CrfPairTable::make(ctx->coarse_grid);
  ctx->fine_pairs = CrfPairTable::make(ctx->fine_grid);
  ctx->coarse_readout = LabelReadout::make(ctx->coarse_grid, config.mesh_level, config.match_dim);
  ctx->fine_readout = LabelReadout::make(ctx->fine_grid, config.mesh_level, config.match_dim);
  return ctx;
}

CascadeParams init_cascade(const CascadeContext& ctx, std::mt19937_64& rng, bool zero_head) {
  const auto& cfg = ctx.config;
  CascadeParams p;
  p.coarse = init_unet(cfg.unet_config(), rng, zero_head);
  p.fine = init_unet(cfg.unet_config(), rng, zero_head);
  const int iters = cfg.use_crf ? cfg.crf_iters : 0;
  p.crf_coarse = default_crf_params(ctx.coarse_grid, iters, cfg.crf_weight);
  p.crf_fine = default_crf_params(ctx.fine_grid, iters, cfg.crf_weight);
  return p;
}

namespace {

struct ScaleResult {
  ad::Var Q, D, field, reg;
};

// One registration scale: logits -> Q -> (CRF) -> control targets -> dense field.
ScaleResult record_scale(ad::Var moving, ad::Var fixed, UNetParams& unet, CrfParams& crf,
                         const ControlGrid& grid, const DensifyPlan& plan,
                         const CrfPairTable& pairs, const LabelReadout& readout,
                         const CascadeContext& ctx,
                         ad::ParamBinder& bind, PassOptions options, PhaseTimes* times) {
  using Clock = std::chrono::steady_clock;
  auto t0 = Clock::now();
  const ForwardMode fm{options.training, options.update_stats};
  auto head = unet_forward(moving, fixed, unet, ctx.bases, bind, fm);
  auto Q = ad::softmax_rows(ad_ops::label_logits(head, grid, unet.config, &readout));
  auto t1 = Clock::now();
  if (crf.iterations > 0) {
    Q = ad_ops::crf_refine(Q, bind(crf.mu), bind(crf.sigma), bind(crf.weight), crf.iterations,
                           pairs);
  }
  auto t2 = Clock::now();
  ad::Var D;
  if (options.deform == DeformMode::kSoft) {
    D = ad_ops::soft_deformation(Q, grid);
  } else {
    D = bind.tape().constant(argmax_deformation({Q.value()}, grid));
  }
  auto field = ad_ops::densify(D, grid, plan);
  auto t3 = Clock::now();
  auto disp = ad::sub(D, bind.tape().constant(grid.control_positions));
  auto reg = ad_ops::field_roughness(disp, grid.neighbors);
  if (times) {
    times->forward += std::chrono::duration<double>(t1 - t0).count();
    times->crf += std::chrono::duration<double>(t2 - t1).count();
    times->densify += std::chrono::duration<double>(t3 - t2).count();
  }
  return {Q, D, field, reg};
}

CascadeGraph record_impl(ad::Tape& tape, ad::ParamBinder& bind, const SphericalSignal& moving,
                         const SphericalSignal& fixed, CascadeParams& params,
                         const CascadeContext& ctx, PassOptions options, PhaseTimes* times) {
  using Clock = std::chrono::steady_clock;
  const auto& cfg = ctx.config;
  validate_signal(moving);
  validate_signal(fixed);
  if (moving.level != cfg.mesh_level || fixed.level != cfg.mesh_level || moving.channels() != 1 ||
      fixed.channels() != 1) {
    throw std::invalid_argument("cascade expects single-channel signals on mesh level " +
                                std::to_string(cfg.mesh_level));
  }
  const Vector fixed_col = fixed.values.col(0);
  auto mv = tape.constant(moving.values);
  auto fx = tape.constant(fixed.values);
  const bool independent = cfg.cascade_mode == CascadeMode::kIndependent;

  CascadeGraph g;
  auto coarse = record_scale(mv, fx, params.coarse, params.crf_coarse, ctx.coarse_grid,
                             *ctx.coarse_plan, ctx.coarse_pairs, ctx.coarse_readout, ctx, bind, options, times);
  auto tw = Clock::now();
  auto warped1 = ad_ops::warp(mv, coarse.field, *ctx.mesh);
  if (times) times->warp += std::chrono::duration<double>(Clock::now() - tw).count();
  g.Q_coarse = coarse.Q;
  g.D_coarse = coarse.D;
  g.coarse_field = coarse.field;
  auto reg1 = ad::scale(coarse.reg, 0.5 * cfg.lambda1);

  if (!cfg.use_fine) {
    g.fine_field = tape.constant(ctx.mesh->vertices());
    g.total_field = coarse.field;
    g.warped = warped1;
    g.loss_sim = ad_ops::loss_sim(fixed_col, warped1);
    g.loss_reg = reg1;
    g.loss = ad::add(g.loss_sim, g.loss_reg);
    return g;
  }

  auto fine_in = independent ? tape.constant(warped1.value()) : warped1;
  auto fine = record_scale(fine_in, fx, params.fine, params.crf_fine, ctx.fine_grid,
                           *ctx.fine_plan, ctx.fine_pairs, ctx.fine_readout, ctx, bind, options, times);
  g.Q_fine = fine.Q;
  g.D_fine = fine.D;
  g.fine_field = fine.field;
  tw = Clock::now();
  auto coarse_for_total = independent ? tape.constant(coarse.field.value()) : coarse.field;
  g.total_field = ad_ops::compose(fine.field, coarse_for_total, *ctx.mesh);
  g.warped = ad_ops::warp(mv, g.total_field, *ctx.mesh);
  if (times) times->warp += std::chrono::duration<double>(Clock::now() - tw).count();
  auto reg2 = ad::scale(fine.reg, 0.5 * cfg.lambda2);
  g.loss_reg = ad::add(reg1, reg2);
  auto sim_final = ad_ops::loss_sim(fixed_col, g.warped);
  g.loss_sim = independent ? ad::add(ad_ops::loss_sim(fixed_col, warped1), sim_final) : sim_final;
  g.loss = ad::add(g.loss_sim, g.loss_reg);
  return g;
}

}  // namespace

CascadeGraph record_cascade(ad::Tape& tape, ad::ParamBinder& bind, const SphericalSignal& moving,
                            const SphericalSignal& fixed, CascadeParams& params,
                            const CascadeContext& ctx, PassOptions options) {
  return record_impl(tape, bind, moving, fixed, params, ctx, options, nullptr);
}

CascadeOutput forward_cascade(const SphericalSignal& moving, const SphericalSignal& fixed,
                              CascadeParams& params, const CascadeContext& ctx, DeformMode deform) {
  ad::Tape tape;
  ad::ParamBinder bind(tape, false);
  CascadeOutput out;
  PassOptions opts;
  opts.deform = deform;
  auto g = record_impl(tape, bind, moving, fixed, params, ctx, opts, &out.times);
  const int level = ctx.config.mesh_level;
  out.warped = {level, g.warped.value()};
  out.coarse_field = {level, g.coarse_field.value()};
  out.fine_field = {level, g.fine_field.value()};
  out.total_field = {level, g.total_field.value()};
  out.Q_coarse = {g.Q_coarse.value()};
  if (g.Q_fine.valid()) out.Q_fine = {g.Q_fine.value()};
  return out;
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,loss_sim,loss_reg,cc_val\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.loss_sim) +
           "," + format_double(e.loss_reg) + "," + format_double(e.cc_val) + "\n";
  }
  return out;
}

double mean_registered_cc(CascadeParams& params, const CascadeContext& ctx,
                          const std::vector<SyntheticPair>& pairs, DeformMode deform) {
  if (pairs.empty()) throw std::invalid_argument("no pairs to evaluate");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto out = forward_cascade(p.moving, p.fixed, params, ctx, deform);
    sum += pearson_cc(out.warped, p.fixed);
  }
  return sum / static_cast<double>(pairs.size());
}

double mean_unregistered_cc(const std::vector<SyntheticPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("no pairs to evaluate");
  double sum = 0.0;
  for (const auto& p : pairs) sum += pearson_cc(p.moving, p.fixed);
  return sum / static_cast<double>(pairs.size());
}

namespace {

struct AdamState {
  std::vector<Matrix> m, v;
  long step = 0;
};

std::string parameter_norms(CascadeParams& params) {
  std::string out;
  for (const auto& p : list_parameters(params)) {
    if (!p.trainable) continue;
    out += "  " + p.name + " |.|=" + format_double(p.value->norm()) + "\n";
  }
  return out;
}

}  // namespace

TrainResult train(const CascadeContext& ctx, const std::vector<SyntheticPair>& dataset,
                  const std::vector<SyntheticPair>& validation, const EpochCallback& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("training needs a non-empty dataset");
  const auto& cfg = ctx.config;
  // Independent streams for initialization and for shuffling.
  std::seed_seq init_seq{cfg.seed, std::uint64_t{0x1}};
  std::seed_seq order_seq{cfg.seed, std::uint64_t{0x2}};
  std::mt19937_64 init_rng(init_seq);
  std::mt19937_64 order_rng(order_seq);

  TrainResult result;
  result.params = init_cascade(ctx, init_rng, true);
  auto named = list_parameters(result.params);
  std::vector<NamedParam> trainable;
  for (const auto& p : named)
    if (p.trainable) trainable.push_back(p);
  AdamState adam;
  for (const auto& p : trainable) {
    adam.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    adam.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& val = validation.empty() ? dataset : validation;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog log;
    log.epoch = epoch;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Matrix> grads;
      for (const auto& p : trainable) grads.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      for (std::size_t k = start; k < end; ++k) {
        const auto& pair = dataset[order[k]];
        ad::Tape tape;
        ad::ParamBinder bind(tape, true);
        PassOptions opts;
        opts.training = true;
        opts.update_stats = true;
        auto g = record_cascade(tape, bind, pair.moving, pair.fixed, result.params, ctx, opts);
        const double loss = g.loss.value()(0, 0);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + " (pair " + std::to_string(order[k]) +
                             ")\nparameter norms:\n" + parameter_norms(result.params));
        }
        tape.backward(g.loss);
        for (std::size_t i = 0; i < trainable.size(); ++i) grads[i] += bind.grad(*trainable[i].value);
        log.loss += loss;
        log.loss_sim += g.loss_sim.value()(0, 0);
        log.loss_reg += g.loss_reg.value()(0, 0);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++adam.step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.step));
      for (std::size_t i = 0; i < trainable.size(); ++i) {
        const Matrix gi = grads[i] * inv;
        if (!gi.allFinite()) {
          throw NumericError("non-finite gradient for " + trainable[i].name + " at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                             "\nparameter norms:\n" + parameter_norms(result.params));
        }
        adam.m[i] = kBeta1 * adam.m[i] + (1.0 - kBeta1) * gi;
        adam.v[i] = kBeta2 * adam.v[i] + (1.0 - kBeta2) * gi.cwiseProduct(gi);
        const Matrix mhat = adam.m[i] / c1;
        const Matrix vhat = adam.v[i] / c2;
        *trainable[i].value -=
            (cfg.learning_rate * mhat.array() / (vhat.array().sqrt() + kEps)).matrix();
      }
      project_crf_params(result.params.crf_coarse);
      project_crf_params(result.params.crf_fine);
    }
    const double n = static_cast<double>(dataset.size());
    log.loss /= n;
    log.loss_sim /= n;
    log.loss_reg /= n;
    log.cc_val = mean_registered_cc(result.params, ctx, val, DeformMode::kSoft);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, result.params);
  }
  return result;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

GradientCheckResult gradient_check(CascadeParams& params, const SyntheticPair& pair,
                                   const CascadeContext& ctx, int per_family, std::uint64_t seed,
                                   double h) {
  if (per_family < 1) throw std::invalid_argument("per_family must be >= 1");
  PassOptions opts;
  opts.training = true;
  opts.update_stats = false;
  auto loss_at = [&]() {
    ad::Tape tape;
    ad::ParamBinder bind(tape, false);
    return record_cascade(tape, bind, pair.moving, pair.fixed, params, ctx, opts).loss.value()(0, 0);
  };

  auto named = list_parameters(params);
  ad::Tape tape;
  ad::ParamBinder bind(tape, true);
  auto g = record_cascade(tape, bind, pair.moving, pair.fixed, params, ctx, opts);
  tape.backward(g.loss);

  GradientCheckResult result;
  std::map<std::string, std::vector<std::pair<std::size_t, Eigen::Index>>> families;
  double norm2 = 0.0;
  std::vector<Matrix> grads(named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (!named[i].trainable) continue;
    grads[i] = bind.grad(*named[i].value);
    norm2 += grads[i].squaredNorm();
    for (Eigen::Index k = 0; k < named[i].value->size(); ++k) families[named[i].family].push_back({i, k});
  }
  result.gradient_norm = std::sqrt(norm2);

  std::mt19937_64 rng(seed);
  for (auto& [family, coords] : families) {
    std::shuffle(coords.begin(), coords.end(), rng);
    const auto take = std::min<std::size_t>(coords.size(), static_cast<std::size_t>(per_family));
    for (std::size_t s = 0; s < take; ++s) {
      const auto [pi, k] = coords[s];
      Matrix& m = *named[pi].value;
      const Eigen::Index r = k % m.rows(), c = k / m.rows();
      const double orig = m(r, c);
      m(r, c) = orig + h;
      const double up = loss_at();
      m(r, c) = orig - h;
      const double down = loss_at();
      m(r, c) = orig;
      GradientCheckEntry e;
      e.name = named[pi].name;
      e.family = family;
      e.row = r;
      e.col = c;
      e.analytic = grads[pi](r, c);
      e.numeric = (up - down) / (2.0 * h);
      e.rel_error = relative_error(e.analytic, e.numeric);
      result.max_rel_error = std::max(result.max_rel_error, e.rel_error);
      result.entries.push_back(std::move(e));
    }
  }
  return result;
}

}  // namespace sphreg
