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

#include "sphreg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

namespace sphreg::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void BinaryWriter::magic(std::string_view four_cc) {
  if (four_cc.size() != 4) throw std::invalid_argument("magic must be 4 bytes");
  bytes(four_cc);
}

void BinaryWriter::u32(std::uint32_t v) {
  std::uint8_t raw[4];
  std::memcpy(raw, &v, 4);
  buf_.insert(buf_.end(), raw, raw + 4);
}

void BinaryWriter::f64(double v) {
  std::uint8_t raw[8];
  std::memcpy(raw, &v, 8);
  buf_.insert(buf_.end(), raw, raw + 8);
}

void BinaryWriter::bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

void BinaryReader::need(std::size_t n, const char* what) const {
  if (remaining() < n) {
    throw FormatError(std::string("truncated input reading ") + what + ": need " +
                          std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left",
                      pos_);
  }
}

void BinaryReader::expect_magic(std::string_view four_cc) {
  need(4, "magic");
  const std::string got(reinterpret_cast<const char*>(data_.data() + pos_), 4);
  if (got != four_cc) {
    throw FormatError("bad magic: expected '" + std::string(four_cc) + "'", pos_);
  }
  pos_ += 4;
}

std::uint32_t BinaryReader::u32() {
  need(4, "u32");
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

double BinaryReader::f64() {
  need(8, "f64");
  double v;
  std::memcpy(&v, data_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BinaryReader::bytes(std::size_t n) {
  need(n, "bytes");
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

void BinaryReader::expect_end() const {
  if (remaining() != 0) {
    throw FormatError(std::to_string(remaining()) + " trailing bytes after payload", pos_);
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

namespace {

void expect_version(BinaryReader& r) {
  const auto at = r.offset();
  const auto v = r.u32();
  if (v != 1) throw FormatError("unsupported version " + std::to_string(v), at);
}

int read_level(BinaryReader& r) {
  const auto at = r.offset();
  const auto level = r.u32();
  if (level > static_cast<std::uint32_t>(kMaxIcosphereLevel)) {
    throw FormatError("mesh level " + std::to_string(level) + " exceeds maximum " +
                          std::to_string(kMaxIcosphereLevel),
                      at);
  }
  return static_cast<int>(level);
}

// Rejects counts whose payload cannot fit in the remaining bytes before
// allocating anything.
void check_payload(const BinaryReader& r, std::uint64_t count, std::uint64_t item_bytes,
                   const char* what) {
  if (item_bytes != 0 && count > r.remaining() / item_bytes) {
    throw FormatError(std::string("truncated ") + what + ": header promises " +
                          std::to_string(count) + " items",
                      r.offset());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_mesh(const Icosphere& mesh) {
  BinaryWriter w;
  w.magic("SPHM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(mesh.level()));
  w.u32(static_cast<std::uint32_t>(mesh.num_vertices()));
  w.u32(static_cast<std::uint32_t>(mesh.num_faces()));
  for (Eigen::Index i = 0; i < mesh.vertices().rows(); ++i)
    for (int d = 0; d < 3; ++d) w.f64(mesh.vertices()(i, d));
  for (const auto& f : mesh.faces())
    for (int k : f) w.u32(static_cast<std::uint32_t>(k));
  return w.release();
}

Icosphere decode_mesh(std::span<const std::uint8_t> data) {
  BinaryReader r(data);
  r.expect_magic("SPHM");
  expect_version(r);
  const int level = read_level(r);
  const auto nv_at = r.offset();
  const auto nv = r.u32();
  if (nv != icosphere_vertex_count(level)) {
    throw FormatError("vertex count " + std::to_string(nv) + " does not match level " +
                          std::to_string(level),
                      nv_at);
  }
  const auto nf_at = r.offset();
  const auto nf = r.u32();
  if (nf != icosphere_face_count(level)) {
    throw FormatError("face count " + std::to_string(nf) + " does not match level " +
                          std::to_string(level),
                      nf_at);
  }
  check_payload(r, nv, 24, "vertex block");
  Points v(nv, 3);
  for (std::uint32_t i = 0; i < nv; ++i)
    for (int d = 0; d < 3; ++d) v(i, d) = r.f64();
  check_payload(r, nf, 12, "face block");
  std::vector<Face> faces(nf);
  for (auto& f : faces)
    for (int& k : f) {
      const auto at = r.offset();
      const auto idx = r.u32();
      if (idx >= nv) throw FormatError("face index " + std::to_string(idx) + " out of range", at);
      k = static_cast<int>(idx);
    }
  r.expect_end();
  return Icosphere(level, std::move(v), std::move(faces));
}

std::vector<std::uint8_t> encode_signal(const SphericalSignal& signal) {
  validate_signal(signal);
  BinaryWriter w;
  w.magic("SPHS");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(signal.level));
  w.u32(static_cast<std::uint32_t>(signal.channels()));
  for (Eigen::Index i = 0; i < signal.values.rows(); ++i)
    for (Eigen::Index c = 0; c < signal.values.cols(); ++c) w.f64(signal.values(i, c));
  return w.release();
}

SphericalSignal decode_signal(std::span<const std::uint8_t> data) {
  BinaryReader r(data);
  r.expect_magic("SPHS");
  expect_version(r);
  const int level = read_level(r);
  const auto ch_at = r.offset();
  const auto channels = r.u32();
  if (channels == 0) throw FormatError("signal has zero channels", ch_at);
  const auto n = icosphere_vertex_count(level);
  check_payload(r, static_cast<std::uint64_t>(n) * channels, 8, "signal values");
  SphericalSignal s{level, Matrix(static_cast<Eigen::Index>(n), channels)};
  for (Eigen::Index i = 0; i < s.values.rows(); ++i)
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) s.values(i, c) = r.f64();
  r.expect_end();
  return s;
}

std::vector<std::uint8_t> encode_coeffs(const SpectralCoeffs& coeffs) {
  if (coeffs.coeffs.rows() != coefficient_count(coeffs.bandwidth)) {
    throw std::invalid_argument("coefficient rows do not match bandwidth");
  }
  BinaryWriter w;
  w.magic("SPHC");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(coeffs.bandwidth));
  w.u32(static_cast<std::uint32_t>(coeffs.channels()));
  for (Eigen::Index i = 0; i < coeffs.coeffs.rows(); ++i)
    for (Eigen::Index c = 0; c < coeffs.coeffs.cols(); ++c) w.f64(coeffs.coeffs(i, c));
  return w.release();
}

SpectralCoeffs decode_coeffs(std::span<const std::uint8_t> data) {
  BinaryReader r(data);
  r.expect_magic("SPHC");
  expect_version(r);
  const auto l_at = r.offset();
  const auto L = r.u32();
  if (L > static_cast<std::uint32_t>(kMaxDegree)) {
    throw FormatError("bandwidth " + std::to_string(L) + " exceeds maximum " +
                          std::to_string(kMaxDegree),
                      l_at);
  }
  const auto ch_at = r.offset();
  const auto channels = r.u32();
  if (channels == 0) throw FormatError("coefficients have zero channels", ch_at);
  const int count = coefficient_count(static_cast<int>(L));
  check_payload(r, static_cast<std::uint64_t>(count) * channels, 8, "coefficients");
  SpectralCoeffs out{static_cast<int>(L), Matrix(count, channels)};
  for (Eigen::Index i = 0; i < out.coeffs.rows(); ++i)
    for (Eigen::Index c = 0; c < out.coeffs.cols(); ++c) out.coeffs(i, c) = r.f64();
  r.expect_end();
  return out;
}

std::vector<std::uint8_t> encode_field(const DeformationField& field) {
  validate_field(field);
  BinaryWriter w;
  w.magic("SPHD");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(field.mesh_level));
  for (Eigen::Index i = 0; i < field.targets.rows(); ++i)
    for (int d = 0; d < 3; ++d) w.f64(field.targets(i, d));
  return w.release();
}

DeformationField decode_field(std::span<const std::uint8_t> data) {
  BinaryReader r(data);
  r.expect_magic("SPHD");
  expect_version(r);
  const int level = read_level(r);
  const auto n = icosphere_vertex_count(level);
  check_payload(r, n, 24, "target block");
  DeformationField f{level, Points(static_cast<Eigen::Index>(n), 3)};
  const auto start = r.offset();
  for (Eigen::Index i = 0; i < f.targets.rows(); ++i)
    for (int d = 0; d < 3; ++d) f.targets(i, d) = r.f64();
  r.expect_end();
  try {
    validate_field(f);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), start);
  }
  return f;
}

void save_mesh(const std::filesystem::path& path, const Icosphere& mesh) {
  write_file(path, encode_mesh(mesh));
}
Icosphere load_mesh(const std::filesystem::path& path) { return decode_mesh(read_file(path)); }
void save_signal(const std::filesystem::path& path, const SphericalSignal& signal) {
  write_file(path, encode_signal(signal));
}
SphericalSignal load_signal(const std::filesystem::path& path) {
  return decode_signal(read_file(path));
}
void save_coeffs(const std::filesystem::path& path, const SpectralCoeffs& coeffs) {
  write_file(path, encode_coeffs(coeffs));
}
SpectralCoeffs load_coeffs(const std::filesystem::path& path) {
  return decode_coeffs(read_file(path));
}
void save_field(const std::filesystem::path& path, const DeformationField& field) {
  write_file(path, encode_field(field));
}
DeformationField load_field(const std::filesystem::path& path) {
  return decode_field(read_file(path));
}

}  // namespace sphreg::io
