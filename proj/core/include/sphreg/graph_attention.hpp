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
#include <random>
#include <vector>

#include "sphreg/autodiff.hpp"
#include "sphreg/common.hpp"
#include "sphreg/icosphere.hpp"

namespace sphreg {

// Attention neighborhoods in CSR form. Node i attends over
// index[offsets[i] .. offsets[i+1]).
struct Neighborhoods {
  std::vector<int> offsets;
  std::vector<int> index;

  std::size_t num_nodes() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

// Node itself first, then its sorted one-ring.
Neighborhoods self_and_one_ring(const Icosphere& mesh);
Neighborhoods from_lists(const std::vector<std::vector<int>>& lists);

// One multi-head attention layer. W stacks the per-head projections
// (heads * head_dim rows, in_dim columns); row h of `a` is [a_src | a_dst]
// for head h.
struct GatLayer {
  int heads = 1;
  int in_dim = 0;
  Matrix W;
  Matrix a;
  double leaky_slope = 0.2;

  int head_dim() const { return in_dim / heads; }
};

GatLayer make_gat_layer(int in_dim, int heads, std::mt19937_64& rng);

struct GatOutput {
  Matrix features;                    // N x in_dim, heads concatenated
  std::vector<std::vector<double>> attention;  // [head][csr slot]
};

GatOutput gat_forward_detailed(const Matrix& features, const Neighborhoods& nbrs,
                               const GatLayer& layer);
Matrix gat_forward(const Matrix& features, const Icosphere& mesh, const GatLayer& layer);

enum class JunctionActivation { kElu, kRelu, kNone };

// Two stacked attention layers with `junction` between them.
Matrix graph_enhanced_module(const Matrix& features, const Icosphere& mesh,
                             const std::array<GatLayer, 2>& layers,
                             JunctionActivation junction = JunctionActivation::kElu);

namespace ad_ops {

ad::Var gat(ad::Var x, ad::Var W, ad::Var a, const Neighborhoods& nbrs, int heads,
            double leaky_slope);

ad::Var junction(ad::Var x, JunctionActivation kind);

}  // namespace ad_ops
}  // namespace sphreg
