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

#include "sphreg/graph_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace sphreg {

Neighborhoods from_lists(const std::vector<std::vector<int>>& lists) {
  Neighborhoods n;
  n.offsets.reserve(lists.size() + 1);
  n.offsets.push_back(0);
  for (const auto& l : lists) {
    n.index.insert(n.index.end(), l.begin(), l.end());
    n.offsets.push_back(static_cast<int>(n.index.size()));
  }
  return n;
}

Neighborhoods self_and_one_ring(const Icosphere& mesh) {
  std::vector<std::vector<int>> lists(mesh.num_vertices());
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    lists[i].push_back(static_cast<int>(i));
    const auto& ring = mesh.one_ring(i);
    lists[i].insert(lists[i].end(), ring.begin(), ring.end());
  }
  return from_lists(lists);
}

GatLayer make_gat_layer(int in_dim, int heads, std::mt19937_64& rng) {
  if (heads < 1 || in_dim < 1 || in_dim % heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(in_dim) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  GatLayer layer;
  layer.heads = heads;
  layer.in_dim = in_dim;
  const int dh = in_dim / heads;
  const double w_bound = std::sqrt(6.0 / (in_dim + dh));
  const double a_bound = std::sqrt(6.0 / (2.0 * dh + 1.0));
  std::uniform_real_distribution<double> wd(-w_bound, w_bound), ad(-a_bound, a_bound);
  layer.W.resize(in_dim, in_dim);
  layer.a.resize(heads, 2 * dh);
  for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = wd(rng);
  for (Eigen::Index r = 0; r < layer.a.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.a.cols(); ++c) layer.a(r, c) = ad(rng);
  return layer;
}

namespace {

void check_layer(const Matrix& x, const Matrix& W, const Matrix& a, const Neighborhoods& nbrs,
                 int heads) {
  const auto d = x.cols();
  if (heads < 1 || d % heads != 0) {
    throw std::invalid_argument("feature width " + std::to_string(d) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (W.rows() != d || W.cols() != d) {
    throw std::invalid_argument("attention projection must be " + std::to_string(d) + "x" +
                                std::to_string(d));
  }
  if (a.rows() != heads || a.cols() != 2 * (d / heads)) {
    throw std::invalid_argument("attention vector has wrong shape");
  }
  if (nbrs.num_nodes() != static_cast<std::size_t>(x.rows())) {
    throw std::invalid_argument("feature rows (" + std::to_string(x.rows()) +
                                ") do not match graph nodes (" +
                                std::to_string(nbrs.num_nodes()) + ")");
  }
}

struct HeadCache {
  Matrix projected;              // N x Dh
  std::vector<double> logits;    // pre-activation, per CSR slot
  std::vector<double> weights;   // softmax, per CSR slot
};

struct GatCache {
  std::vector<HeadCache> heads;
};

Matrix gat_values(const Matrix& x, const Matrix& W, const Matrix& a, const Neighborhoods& nbrs,
                  int heads, double slope, GatCache& cache) {
  const auto n = x.rows();
  const int dh = static_cast<int>(x.cols()) / heads;
  Matrix out(n, x.cols());
  cache.heads.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto& hc = cache.heads[static_cast<std::size_t>(h)];
    hc.projected = x * W.middleRows(h * dh, dh).transpose();
    const Vector src = hc.projected * a.row(h).head(dh).transpose();
    const Vector dst = hc.projected * a.row(h).tail(dh).transpose();
    hc.logits.resize(nbrs.index.size());
    hc.weights.resize(nbrs.index.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const int lo = nbrs.offsets[i], hi = nbrs.offsets[i + 1];
      double mx = -std::numeric_limits<double>::infinity();
      for (int s = lo; s < hi; ++s) {
        const double z = src[i] + dst[nbrs.index[s]];
        hc.logits[s] = z;
        mx = std::max(mx, z > 0.0 ? z : slope * z);
      }
      double total = 0.0;
      for (int s = lo; s < hi; ++s) {
        const double z = hc.logits[s];
        const double e = std::exp((z > 0.0 ? z : slope * z) - mx);
        hc.weights[s] = e;
        total += e;
      }
      RowVector acc = RowVector::Zero(dh);
      for (int s = lo; s < hi; ++s) {
        hc.weights[s] /= total;
        acc += hc.weights[s] * hc.projected.row(nbrs.index[s]);
      }
      out.block(i, h * dh, 1, dh) = acc;
    }
  }
  return out;
}

}  // namespace

GatOutput gat_forward_detailed(const Matrix& features, const Neighborhoods& nbrs,
                               const GatLayer& layer) {
  check_layer(features, layer.W, layer.a, nbrs, layer.heads);
  GatCache cache;
  GatOutput out;
  out.features = gat_values(features, layer.W, layer.a, nbrs, layer.heads, layer.leaky_slope, cache);
  for (auto& hc : cache.heads) out.attention.push_back(std::move(hc.weights));
  return out;
}

Matrix gat_forward(const Matrix& features, const Icosphere& mesh, const GatLayer& layer) {
  if (static_cast<std::size_t>(features.rows()) != mesh.num_vertices()) {
    throw std::invalid_argument("feature rows do not match mesh vertex count");
  }
  return gat_forward_detailed(features, self_and_one_ring(mesh), layer).features;
}

Matrix graph_enhanced_module(const Matrix& features, const Icosphere& mesh,
                             const std::array<GatLayer, 2>& layers, JunctionActivation junction) {
  if (static_cast<std::size_t>(features.rows()) != mesh.num_vertices()) {
    throw std::invalid_argument("feature rows do not match mesh vertex count");
  }
  const auto nbrs = self_and_one_ring(mesh);
  ad::Tape tape;
  auto x = tape.constant(features);
  for (int k = 0; k < 2; ++k) {
    const auto& layer = layers[static_cast<std::size_t>(k)];
    x = ad_ops::gat(x, tape.constant(layer.W), tape.constant(layer.a), nbrs, layer.heads,
                    layer.leaky_slope);
    if (k == 0) x = ad_ops::junction(x, junction);
  }
  return x.value();
}

namespace ad_ops {

ad::Var gat(ad::Var x, ad::Var W, ad::Var a, const Neighborhoods& nbrs, int heads,
            double leaky_slope) {
  check_layer(x.value(), W.value(), a.value(), nbrs, heads);
  auto cache = std::make_shared<GatCache>();
  Matrix out = gat_values(x.value(), W.value(), a.value(), nbrs, heads, leaky_slope, *cache);
  const Neighborhoods* graph = &nbrs;
  return x.tape()->record(
      std::move(out), {x, W, a},
      [x, W, a, graph, heads, leaky_slope, cache](ad::Tape& t, const Matrix& g) {
        const auto n = x.rows();
        const int dh = static_cast<int>(x.cols()) / heads;
        Matrix gx = Matrix::Zero(n, x.cols());
        Matrix gW = Matrix::Zero(W.rows(), W.cols());
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        for (int h = 0; h < heads; ++h) {
          const auto& hc = cache->heads[static_cast<std::size_t>(h)];
          const RowVector a_src = a.value().row(h).head(dh);
          const RowVector a_dst = a.value().row(h).tail(dh);
          Matrix gproj = Matrix::Zero(n, dh);
          Vector gsrc = Vector::Zero(n), gdst = Vector::Zero(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const int lo = graph->offsets[i], hi = graph->offsets[i + 1];
            const RowVector go = g.block(i, h * dh, 1, dh);
            double weighted = 0.0;
            for (int s = lo; s < hi; ++s) {
              const int j = graph->index[s];
              gproj.row(j) += hc.weights[s] * go;
              weighted += hc.weights[s] * go.dot(hc.projected.row(j));
            }
            for (int s = lo; s < hi; ++s) {
              const int j = graph->index[s];
              const double galpha = go.dot(hc.projected.row(j));
              const double ge = hc.weights[s] * (galpha - weighted);
              const double gz = ge * (hc.logits[s] > 0.0 ? 1.0 : leaky_slope);
              gsrc[i] += gz;
              gdst[j] += gz;
            }
          }
          gproj += gsrc * a_src + gdst * a_dst;
          ga.row(h).head(dh) = gsrc.transpose() * hc.projected;
          ga.row(h).tail(dh) = gdst.transpose() * hc.projected;
          gW.middleRows(h * dh, dh) = gproj.transpose() * x.value();
          gx += gproj * W.value().middleRows(h * dh, dh);
        }
        t.accumulate(x, gx);
        t.accumulate(W, gW);
        t.accumulate(a, ga);
      });
}

ad::Var junction(ad::Var x, JunctionActivation kind) {
  switch (kind) {
    case JunctionActivation::kElu:
      return ad::elu(x);
    case JunctionActivation::kRelu:
      return ad::relu(x);
    case JunctionActivation::kNone:
      break;
  }
  return x;
}

}  // namespace ad_ops
}  // namespace sphreg
