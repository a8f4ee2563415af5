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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "sphreg/metrics.hpp"
#include "sphreg/training.hpp"
#include "test_util.hpp"

namespace sphreg {
namespace {

TrainConfig desk() {
  TrainConfig c;
  c.mesh_level = 2;
  c.bandwidth = 8;
  c.channels = 4;
  return c;
}

bool same_pairs(const std::vector<SyntheticPair>& a, const std::vector<SyntheticPair>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].fixed.values.array() == b[i].fixed.values.array()).all()) return false;
    if (!(a[i].moving.values.array() == b[i].moving.values.array()).all()) return false;
    if (!(a[i].ground_truth.targets.array() == b[i].ground_truth.targets.array()).all()) return false;
  }
  return true;
}

TEST_CASE("config text round-trips and rejects bad values") {
  TrainConfig c;
  c.learning_rate = 0.0123456789012345;
  c.cascade_mode = CascadeMode::kIndependent;
  c.label_head = LabelHead::kDirect;
  c.use_graph = false;
  c.seed = 18446744073709551615ull;
  const TrainConfig back = TrainConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.seed == c.seed);

  const auto keys = train_config_keys();
  CHECK(std::find(keys.begin(), keys.end(), "cascade_mode") != keys.end());
  const std::string text = c.to_text();
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(keys.size()));

  const TrainConfig partial = TrainConfig::from_text("# comment\nepochs=3\n\nuse_crf=false\n", c);
  CHECK(partial.epochs == 3);
  CHECK_FALSE(partial.use_crf);
  CHECK(partial.cascade_mode == CascadeMode::kIndependent);

  TrainConfig d;
  CHECK_THROWS_AS(d.set("nonsense", "1"), std::invalid_argument);
  CHECK_THROWS_AS(d.set("epochs", "three"), std::invalid_argument);
  CHECK_THROWS_AS(d.set("epochs", "3x"), std::invalid_argument);
  CHECK_THROWS_AS(d.set("use_graph", "maybe"), std::invalid_argument);
  CHECK_THROWS_AS(d.set("cascade_mode", "both"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_text("epochs"), std::invalid_argument);
  d.fine_level = 1;
  d.coarse_level = 2;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("synthetic data is deterministic and well posed") {
  const TrainConfig c;
  CHECK(same_pairs(synth_dataset(3, c, 5), synth_dataset(3, c, 5)));
  CHECK_FALSE(same_pairs(synth_dataset(3, c, 5), synth_dataset(3, c, 6)));
  CHECK_THROWS_AS(synth_dataset(0, c, 5), std::invalid_argument);

  TrainConfig still = c;
  still.warp_amplitude = 0.0;
  still.noise_amplitude = 0.0;
  for (const auto& p : synth_dataset(3, still, 5))
    CHECK((p.moving.values.array() == p.fixed.values.array()).all());
}

TEST_CASE("default pairs are partially correlated and the ground truth registers them") {
  const TrainConfig c;
  const auto pairs = synth_dataset(50, c, 9);
  const Icosphere& mesh = cached_icosphere(c.mesh_level);
  for (const auto& p : pairs) {
    const double before = pearson_cc(p.moving, p.fixed);
    CHECK(before > 0.3);
    CHECK(before < 0.95);
    CHECK(pearson_cc(warp_signal(p.moving, p.ground_truth, mesh), p.fixed) >= before);
    CHECK(distortion_report(mesh, p.ground_truth).folds == 0);
  }
}

TEST_CASE("zero-head parameters register to the identity") {
  TrainConfig c = desk();
  c.use_crf = false;
  const auto ctx = CascadeContext::make(c);
  std::mt19937_64 rng(1);
  CascadeParams params = init_cascade(*ctx, rng, true);
  const auto pair = synth_dataset(1, c, 3).front();
  for (DeformMode mode : {DeformMode::kSoft, DeformMode::kArgmax}) {
    const CascadeOutput out = forward_cascade(pair.moving, pair.fixed, params, *ctx, mode);
    CHECK(test::max_abs(out.Q_coarse.Q.array() - 1.0 / c.num_labels) < 1e-15);
    CHECK(test::max_abs(out.total_field.targets - ctx->mesh->vertices()) < 1e-14);
    CHECK(test::max_abs(out.warped.values - pair.moving.values) < 1e-12);
  }
}

TEST_CASE("cascade wiring") {
  TrainConfig c = desk();
  const auto ctx = CascadeContext::make(c);
  std::mt19937_64 rng(2);
  CascadeParams params = init_cascade(*ctx, rng, false);
  const auto pair = synth_dataset(1, c, 4).front();
  const CascadeOutput out = forward_cascade(pair.moving, pair.fixed, params, *ctx);
  const Icosphere& mesh = *ctx->mesh;
  // total applies fine then coarse: warp(m, total) = warp(warp(m, coarse), fine).
  const Matrix direct = warp_signal(pair.moving, out.total_field, mesh).values;
  const Matrix twice = warp_signal(warp_signal(pair.moving, out.coarse_field, mesh), out.fine_field, mesh).values;
  CHECK(test::max_abs(direct - twice) < 1e-1);
  CHECK(test::max_abs(out.total_field.targets - compose(out.fine_field, out.coarse_field).targets) < 1e-12);
  CHECK(test::max_abs(out.warped.values - direct) < 1e-12);

  c.use_fine = false;
  const auto coarse_ctx = CascadeContext::make(c);
  const CascadeOutput coarse = forward_cascade(pair.moving, pair.fixed, params, *coarse_ctx);
  CHECK((coarse.fine_field.targets.array() == mesh.vertices().array()).all());
  CHECK((coarse.total_field.targets.array() == coarse.coarse_field.targets.array()).all());
  CHECK((coarse.coarse_field.targets.array() == out.coarse_field.targets.array()).all());
}

TEST_CASE("loss is the similarity term when both lambdas are zero") {
  TrainConfig c = desk();
  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  const auto ctx = CascadeContext::make(c);
  std::mt19937_64 rng(3);
  CascadeParams params = init_cascade(*ctx, rng, false);
  const auto pair = synth_dataset(1, c, 5).front();
  ad::Tape tape;
  ad::ParamBinder bind(tape, false);
  const CascadeGraph g = record_cascade(tape, bind, pair.moving, pair.fixed, params, *ctx, {});
  CHECK(g.loss.value()(0, 0) == g.loss_sim.value()(0, 0));
}

TEST_CASE("parameter listing covers every family") {
  const auto ctx = CascadeContext::make(desk());
  std::mt19937_64 rng(4);
  CascadeParams params = init_cascade(*ctx, rng);
  std::set<std::string> families;
  std::set<std::string> names;
  for (const auto& p : list_parameters(params)) {
    if (p.trainable) families.insert(p.family);
    CHECK(names.insert(p.name).second);
  }
  CHECK(families == std::set<std::string>{"alpha", "bn", "crf", "gat_W", "gat_a", "h", "mu"});
}

TEST_CASE("gradient check on the smooth path and with the CRF unrolled") {
  TrainConfig c = desk();
  c.use_crf = false;
  auto ctx = CascadeContext::make(c);
  std::mt19937_64 rng(5);
  CascadeParams params = init_cascade(*ctx, rng, false);
  const auto pair = synth_dataset(1, c, 6).front();
  const GradientCheckResult smooth = gradient_check(params, pair, *ctx, 3, 7);
  CHECK(smooth.max_rel_error < 1e-3);

  c.use_crf = true;
  ctx = CascadeContext::make(c);
  std::mt19937_64 rng2(5);
  CascadeParams crf_params = init_cascade(*ctx, rng2, false);
  const GradientCheckResult crf = gradient_check(crf_params, pair, *ctx, 3, 8);
  CHECK(crf.max_rel_error < 1e-2);
  bool saw_crf = false;
  for (const auto& e : crf.entries) saw_crf = saw_crf || e.family == "crf";
  CHECK(saw_crf);
}

TEST_CASE("identical pairs at the identity are a stationary point") {
  TrainConfig c = desk();
  c.use_crf = false;
  const auto ctx = CascadeContext::make(c);
  std::mt19937_64 rng(6);
  CascadeParams params = init_cascade(*ctx, rng, true);
  SyntheticPair same = synth_dataset(1, c, 7).front();
  same.moving = same.fixed;
  const GradientCheckResult r = gradient_check(params, same, *ctx, 1, 9);
  CHECK(r.gradient_norm < 1e-6);
}

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-2));
}

TEST_CASE("training is deterministic and reduces the loss") {
  TrainConfig c = desk();
  c.epochs = 3;
  const auto ctx = CascadeContext::make(c);
  const auto data = synth_dataset(6, c, 11);
  const TrainResult a = train(*ctx, data);
  const TrainResult b = train(*ctx, data);
  REQUIRE(a.log.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.log[e].loss == b.log[e].loss);
    CHECK(a.log[e].cc_val == b.log[e].cc_val);
  }
  CHECK(format_log_csv(a.log).rfind("epoch,loss,loss_sim,loss_reg,cc_val\n1,", 0) == 0);
}

TEST_CASE("default config improves over ten epochs on 64 pairs") {
  const TrainConfig c;
  const auto ctx = CascadeContext::make(c);
  const auto data = synth_dataset(64, c, 12);
  std::vector<double> losses;
  const TrainResult r = train(*ctx, data, {}, [&](const EpochLog& e, const CascadeParams&) {
    losses.push_back(e.loss);
  });
  REQUIRE(losses.size() == 10);
  CHECK(losses.back() < losses.front());
  CHECK(r.log.back().loss == losses.back());
}

}  // namespace
}  // namespace sphreg
