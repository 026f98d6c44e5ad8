// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <vector>

#include "seau/error.hpp"

namespace seau {

// Row-major float matrix used on the data-plane side of the project (corpus
// synthesis, feature extraction, clustering).  The differentiable side has
// its own Tensor type.
struct FloatMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<float> data;

  FloatMatrix() = default;
  FloatMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0f) {}

  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
  float* row(int64_t r) { return data.data() + r * cols; }
  const float* row(int64_t r) const { return data.data() + r * cols; }
  int64_t numel() const { return rows * cols; }

  void check_shape(int64_t r, int64_t c, const char* what) const {
    if (rows != r || cols != c) {
      throw ShapeError(std::string(what) + ": expected " + std::to_string(r) + "x" +
                       std::to_string(c) + ", got " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }
};

}  // namespace seau
