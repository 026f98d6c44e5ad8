// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seau/tensor.hpp"

namespace seau::ad {

// Named parameters sharing freeze/scale controls.  Frozen groups receive no
// optimizer updates; grad_scale multiplies gradients before the step.
struct ParameterGroup {
  ParameterGroup() = default;
  explicit ParameterGroup(std::string group_name, bool frozen_flag = false, float scale = 1.0f)
      : name(std::move(group_name)), frozen(frozen_flag), grad_scale(scale) {}

  std::string name;
  std::vector<Tensor> params;
  bool frozen = false;
  float grad_scale = 1.0f;

  // Registers the tensor under "<group>.<name>".
  Tensor& add(const std::string& param_name, Tensor t);
  Tensor* find(const std::string& full_name);
};

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
  double clip_norm = 5.0;  // global-norm clip over trainable grads; <= 0 disables
};

// First/second moment buffers keyed by parameter name, plus the step count.
// Stored float32 so checkpoint round-trips are bit-exact.
class AdamState {
 public:
  int64_t step_count() const { return step_; }

  struct Slot {
    std::vector<float> m;
    std::vector<float> v;
  };
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void set_step(int64_t s) { step_ = s; }

 private:
  friend double adam_step(std::vector<ParameterGroup*> groups, AdamState& state,
                          const AdamConfig& config, float lr);
  std::map<std::string, Slot> slots_;
  int64_t step_ = 0;
};

// Bias-corrected Adam over all non-frozen groups.  Applies grad_scale, then
// the global-norm clip, then the update; clears every grad (frozen included).
// Returns the pre-clip global gradient norm.
double adam_step(std::vector<ParameterGroup*> groups, AdamState& state, const AdamConfig& config,
                 float lr);

struct LrSchedule {
  enum class Kind { kWarmupLinearDecay, kWarmupHoldHalve };
  Kind kind = Kind::kWarmupLinearDecay;
  int64_t warmup_steps = 0;
  double peak_lr = 0.0;
  int64_t total_steps = 0;      // linear-decay endpoint
  int64_t steps_per_epoch = 0;  // hold-halve epochs
  int64_t decay_end_epoch = 15;

  static LrSchedule warmup_linear_decay(int64_t warmup, double peak, int64_t total);
  static LrSchedule warmup_hold_halve(int64_t warmup, double peak, int64_t steps_per_epoch,
                                      int64_t decay_end_epoch = 15);
};

double lr_at(const LrSchedule& schedule, int64_t step);

}  // namespace seau::ad
