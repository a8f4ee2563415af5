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

#include "sphreg/shconv.hpp"
#include "sphreg/sht.hpp"
#include "sphreg/training.hpp"

namespace sphreg {
namespace {

// Args: icosphere level, bandwidth.
void BM_ShtForward(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  const int band = static_cast<int>(state.range(1));
  const auto basis = cached_basis(level, band);
  std::mt19937_64 rng(1);
  const SphericalSignal s = random_bandlimited_signal(level, band, rng);
  for (auto _ : state) benchmark::DoNotOptimize(sht_forward(s, *basis));
}
BENCHMARK(BM_ShtForward)->Args({3, 16})->Args({4, 16})->Args({4, 32});

void BM_ShtInverse(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  const int band = static_cast<int>(state.range(1));
  const auto basis = cached_basis(level, band);
  std::mt19937_64 rng(2);
  const SpectralCoeffs c = sht_forward(random_bandlimited_signal(level, band, rng), *basis);
  for (auto _ : state) benchmark::DoNotOptimize(sht_inverse(c, *basis));
}
BENCHMARK(BM_ShtInverse)->Args({3, 16})->Args({4, 16})->Args({4, 32});

void BM_BuildBasis(benchmark::State& state) {
  const Icosphere& mesh = cached_icosphere(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_basis(mesh, 16));
}
BENCHMARK(BM_BuildBasis)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

// Args: channels in and out.
void BM_ZonalConvolve(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto basis = cached_basis(4, 16);
  std::mt19937_64 rng(3);
  ZonalFilter filt = make_zonal_filter(c, c, 16);
  init_zonal_filter(filt, rng);
  SphericalSignal s{4, Matrix(icosphere_vertex_count(4), c)};
  for (int k = 0; k < c; ++k) s.values.col(k) = random_bandlimited_signal(4, 16, rng).values;
  for (auto _ : state) benchmark::DoNotOptimize(zonal_convolve(s, filt, *basis, 16));
}
BENCHMARK(BM_ZonalConvolve)->Arg(1)->Arg(8)->Arg(16);

}  // namespace
}  // namespace sphreg
