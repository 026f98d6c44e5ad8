// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace seau {

// Little-endian binary encoding helpers.  All on-disk formats in this project
// are explicitly little-endian regardless of host order.

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, size_t n);
  // u32 length prefix + raw UTF-8 bytes.
  void str(const std::string& s);
  void f32_array(const float* data, size_t n);
  void u16_array(const uint16_t* data, size_t n);

  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t n, std::string origin)
      : p_(data), n_(n), origin_(std::move(origin)) {}

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32();
  double f64();
  std::string str();
  std::vector<float> f32_array(size_t n);
  std::vector<uint16_t> u16_array(size_t n);
  size_t remaining() const { return n_ - pos_; }
  bool done() const { return pos_ == n_; }

 private:
  void need(size_t n);
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
  std::string origin_;  // named in IntegrityError messages
};

// Whole-file helpers.  write_file_atomic writes to a sibling temp file and
// renames it over the target so partially written artifacts never appear.
std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace seau
