// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/binio.hpp"

#include <cstring>
#include <fstream>

#include "seau/error.hpp"

namespace seau {

void ByteWriter::u16(uint16_t v) {
  buf_.push_back(static_cast<uint8_t>(v & 0xff));
  buf_.push_back(static_cast<uint8_t>(v >> 8));
}

void ByteWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void ByteWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void ByteWriter::bytes(const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::f32_array(const float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) f32(data[i]);
}

void ByteWriter::u16_array(const uint16_t* data, size_t n) {
  for (size_t i = 0; i < n; ++i) u16(data[i]);
}

void ByteReader::need(size_t n) {
  if (pos_ + n > n_) {
    throw IntegrityError(origin_ + ": truncated (need " + std::to_string(n) +
                         " bytes at offset " + std::to_string(pos_) + ", have " +
                         std::to_string(n_ - pos_) + ")");
  }
}

uint8_t ByteReader::u8() {
  need(1);
  return p_[pos_++];
}

uint16_t ByteReader::u16() {
  need(2);
  uint16_t v = static_cast<uint16_t>(p_[pos_]) | static_cast<uint16_t>(p_[pos_ + 1]) << 8;
  pos_ += 2;
  return v;
}

uint32_t ByteReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t ByteReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() {
  uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double ByteReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string ByteReader::str() {
  uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
  pos_ += n;
  return s;
}

std::vector<float> ByteReader::f32_array(size_t n) {
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = f32();
  return out;
}

std::vector<uint16_t> ByteReader::u16_array(size_t n) {
  std::vector<uint16_t> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = u16();
  return out;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  auto n = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<uint8_t> buf(n);
  if (n > 0) in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (!in) throw IntegrityError("short read on " + path.string());
  return buf;
}

static void write_raw_atomic(const std::filesystem::path& path, const void* data, size_t n) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw DataError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  write_raw_atomic(path, bytes.data(), bytes.size());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_raw_atomic(path, text.data(), text.size());
}

std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

}  // namespace seau
