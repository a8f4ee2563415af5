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
#include <filesystem>
#include <span>
#include <vector>

#include "sphreg/training.hpp"

namespace sphreg {

struct Checkpoint {
  TrainConfig config;
  CascadeParams params;
};

// SPHK: magic, u32 version=1, u32 config length + key=value text, u32 tensor
// count, then per tensor: u32 name length, UTF-8 name, u32 rank (2), u32
// dims, f64 data row-major.
std::vector<std::uint8_t> encode_checkpoint(const TrainConfig& config, CascadeParams& params);

// Rebuilds the parameter layout from the stored config and fills it; every
// stored tensor must match a parameter by name and shape.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> data);

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                     CascadeParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sphreg
