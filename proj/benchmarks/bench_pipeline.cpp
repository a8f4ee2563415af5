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


#include <benchmark/benchmark.h>

#include <random>

#include "sphreg/crf.hpp"
#include "sphreg/graph_attention.hpp"
#include "sphreg/metrics.hpp"
#include "sphreg/training.hpp"

namespace sphreg {
namespace {

void BM_GatLayer(benchmark::State& state) {
  const Icosphere& mesh = cached_icosphere(static_cast<int>(state.range(0)));
  const Neighborhoods nbrs = self_and_one_ring(mesh);
  std::mt19937_64 rng(4);
  const GatLayer layer = make_gat_layer(16, 4, rng);
  const Matrix x = Matrix::Random(static_cast<Eigen::Index>(mesh.num_vertices()), 16);
  for (auto _ : state) benchmark::DoNotOptimize(gat_forward_detailed(x, nbrs, layer));
}
BENCHMARK(BM_GatLayer)->Arg(3)->Arg(4);

void BM_CrfRefine(benchmark::State& state) {
  const ControlGrid grid = build_label_sets(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)) + 1, 2, 7);
  const CrfParams params = default_crf_params(grid);
  Matrix q = Matrix::Random(static_cast<Eigen::Index>(grid.num_controls()), 7).array().exp();
  for (Eigen::Index r = 0; r < q.rows(); ++r) q.row(r) /= q.row(r).sum();
  for (auto _ : state) benchmark::DoNotOptimize(crf_refine({q}, grid, params));
}
BENCHMARK(BM_CrfRefine)->Arg(1)->Arg(2);

void BM_DistortionReport(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  const DeformationField field = random_smooth_field(level, 1, 0.05, rng);
  const Icosphere& mesh = cached_icosphere(level);
  for (auto _ : state) benchmark::DoNotOptimize(distortion_report(mesh, field));
}
BENCHMARK(BM_DistortionReport)->Arg(4)->Arg(5);

// One inference pass of the default cascade (random weights).
void BM_ForwardCascade(benchmark::State& state) {
  const TrainConfig cfg;
  const auto ctx = CascadeContext::make(cfg);
  std::mt19937_64 rng(6);
  CascadeParams params = init_cascade(*ctx, rng, false);
  const auto pair = synth_dataset(1, cfg, 7).front();
  for (auto _ : state) benchmark::DoNotOptimize(forward_cascade(pair.moving, pair.fixed, params, *ctx));
}
BENCHMARK(BM_ForwardCascade)->Unit(benchmark::kMillisecond);

// Forward plus reverse pass of the training loss.
void BM_TrainingStep(benchmark::State& state) {
  const TrainConfig cfg;
  const auto ctx = CascadeContext::make(cfg);
  std::mt19937_64 rng(8);
  CascadeParams params = init_cascade(*ctx, rng, false);
  const auto pair = synth_dataset(1, cfg, 9).front();
  for (auto _ : state) {
    ad::Tape tape;
    ad::ParamBinder bind(tape, true);
    const CascadeGraph g = record_cascade(tape, bind, pair.moving, pair.fixed, params, *ctx,
                                          PassOptions{true, false, DeformMode::kSoft});
    tape.backward(g.loss);
    benchmark::DoNotOptimize(g.loss.value());
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace sphreg
