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
#include <string>
#include <string_view>
#include <vector>

#include "sphreg/common.hpp"
#include "sphreg/icosphere.hpp"
#include "sphreg/sht.hpp"
#include "sphreg/warp.hpp"

namespace sphreg::io {

// Little-endian byte sink.
class BinaryWriter {
 public:
  void magic(std::string_view four_cc);
  void u32(std::uint32_t v);
  void f64(double v);
  void bytes(std::string_view s);

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> release() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Little-endian byte source; every failure reports the byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(std::span<const std::uint8_t> data) : data_(data) {}

  void expect_magic(std::string_view four_cc);
  std::uint32_t u32();
  double f64();
  std::string bytes(std::size_t n);
  void expect_end() const;

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

// SPHM: magic, u32 version=1, u32 level, u32 n_vertices, u32 n_faces,
// f64 vertex triples, u32 face triples.
std::vector<std::uint8_t> encode_mesh(const Icosphere& mesh);
Icosphere decode_mesh(std::span<const std::uint8_t> data);

// SPHS: magic, u32 version=1, u32 level, u32 channels, f64 values row-major.
std::vector<std::uint8_t> encode_signal(const SphericalSignal& signal);
SphericalSignal decode_signal(std::span<const std::uint8_t> data);

// SPHC: magic, u32 version=1, u32 L, u32 channels, f64 coefficients in
// flat-index order (row-major over (index, channel)).
std::vector<std::uint8_t> encode_coeffs(const SpectralCoeffs& coeffs);
SpectralCoeffs decode_coeffs(std::span<const std::uint8_t> data);

// SPHD: magic, u32 version=1, u32 level, f64 target triples.
std::vector<std::uint8_t> encode_field(const DeformationField& field);
DeformationField decode_field(std::span<const std::uint8_t> data);

void save_mesh(const std::filesystem::path& path, const Icosphere& mesh);
Icosphere load_mesh(const std::filesystem::path& path);
void save_signal(const std::filesystem::path& path, const SphericalSignal& signal);
SphericalSignal load_signal(const std::filesystem::path& path);
void save_coeffs(const std::filesystem::path& path, const SpectralCoeffs& coeffs);
SpectralCoeffs load_coeffs(const std::filesystem::path& path);
void save_field(const std::filesystem::path& path, const DeformationField& field);
DeformationField load_field(const std::filesystem::path& path);

}  // namespace sphreg::io
