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

#include "sphreg/checkpoint.hpp"

#include <random>
#include <set>
#include <string>

#include "sphreg/io.hpp"

namespace sphreg {

std::vector<std::uint8_t> encode_checkpoint(const TrainConfig& config, CascadeParams& params) {
  io::BinaryWriter w;
  w.magic("SPHK");
  w.u32(1);
  const std::string text = config.to_text();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  const auto named = list_parameters(params);
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& p : named) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(p.value->rows()));
    w.u32(static_cast<std::uint32_t>(p.value->cols()));
    for (Eigen::Index r = 0; r < p.value->rows(); ++r)
      for (Eigen::Index c = 0; c < p.value->cols(); ++c) w.f64((*p.value)(r, c));
  }
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> data) {
  io::BinaryReader r(data);
  r.expect_magic("SPHK");
  const auto ver_at = r.offset();
  if (const auto v = r.u32(); v != 1) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v), ver_at);
  }
  const auto text_at = r.offset();
  const auto text_len = r.u32();
  const std::string text = r.bytes(text_len);
  Checkpoint ck;
  try {
    ck.config = TrainConfig::from_text(text);
    ck.config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what(), text_at);
  }
  const auto ctx = CascadeContext::make(ck.config);
  std::mt19937_64 rng(0);
  ck.params = init_cascade(*ctx, rng, true);
  auto named = list_parameters(ck.params);

  const auto count_at = r.offset();
  const auto count = r.u32();
  if (count != named.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(named.size()),
                      count_at);
  }
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_at = r.offset();
    const auto len = r.u32();
    if (len > r.remaining()) throw FormatError("tensor name runs past end of input", name_at);
    const std::string name = r.bytes(len);
    NamedParam* target = nullptr;
    for (auto& p : named)
      if (p.name == name) target = &p;
    if (target == nullptr) throw FormatError("unknown tensor '" + name + "'", name_at);
    if (!seen.insert(name).second) throw FormatError("duplicate tensor '" + name + "'", name_at);
    const auto rank_at = r.offset();
    if (const auto rank = r.u32(); rank != 2) {
      throw FormatError("tensor '" + name + "' has rank " + std::to_string(rank) + ", expected 2",
                        rank_at);
    }
    const auto dims_at = r.offset();
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows != target->value->rows() || cols != target->value->cols()) {
      throw FormatError("tensor '" + name + "' is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " +
                            std::to_string(target->value->rows()) + "x" +
                            std::to_string(target->value->cols()),
                        dims_at);
    }
    for (Eigen::Index i = 0; i < target->value->rows(); ++i)
      for (Eigen::Index j = 0; j < target->value->cols(); ++j) (*target->value)(i, j) = r.f64();
  }
  r.expect_end();
  for (auto* crf : {&ck.params.crf_coarse, &ck.params.crf_fine}) {
    try {
      validate_crf_params(*crf, static_cast<std::size_t>(ck.config.num_labels));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("bad CRF parameters: ") + e.what(), r.offset());
    }
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                     CascadeParams& params) {
  io::write_file(path, encode_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace sphreg
