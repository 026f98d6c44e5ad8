// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "seau/tensor.hpp"

namespace seau::testing {

// Central finite-difference gradient check.  `f` must be a pure function of
// the input tensors' current values; it is re-evaluated with perturbed
// entries, so any randomness inside must be re-seeded per call.
//
// Error metric per element: |analytic - fd| / max(1, |analytic| + |fd|),
// i.e. relative for large gradients with a unit absolute floor.  The finite
// difference uses the actually-representable float step.
inline double grad_check(const std::function<ad::Tensor(std::vector<ad::Tensor>&)>& f,
                         std::vector<ad::Tensor> inputs, double h = 1e-3) {
  using ad::Tensor;
  for (auto& in : inputs) in.zero_grad();
  Tensor loss = f(inputs);
  ad::backward(loss);
  std::vector<std::vector<float>> analytic;
  for (auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  double max_err = 0.0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto vals = inputs[t].values_mut();
    for (size_t i = 0; i < vals.size(); ++i) {
      const float orig = vals[i];
      const float xp = static_cast<float>(orig + h);
      const float xm = static_cast<float>(orig - h);
      vals[i] = xp;
      const double lp = f(inputs).scalar();
      vals[i] = xm;
      const double lm = f(inputs).scalar();
      vals[i] = orig;
      const double fd = (lp - lm) / (static_cast<double>(xp) - static_cast<double>(xm));
      const double a = analytic[t][i];
      const double err = std::abs(a - fd) / std::max(1.0, std::abs(a) + std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

// Moves small entries away from zero; used before kinked ops like relu.
inline void nudge_from_zero(ad::Tensor& t, float margin) {
  for (float& v : t.values_mut()) {
    if (std::abs(v) < margin) v = v < 0.0f ? v - margin : v + margin;
  }
}

inline bool bits_equal(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace seau::testing
