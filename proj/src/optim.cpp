// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/optim.hpp"

#include <cmath>

namespace seau::ad {

Tensor& ParameterGroup::add(const std::string& param_name, Tensor t) {
  t.set_name(name + "." + param_name);
  params.push_back(std::move(t));
  return params.back();
}

Tensor* ParameterGroup::find(const std::string& full_name) {
  for (Tensor& t : params) {
    if (t.name() == full_name) return &t;
  }
  return nullptr;
}

double adam_step(std::vector<ParameterGroup*> groups, AdamState& state, const AdamConfig& config,
                 float lr) {
  state.step_ += 1;
  const int64_t t = state.step_;

  // Global gradient norm over trainable parameters, grad_scale applied.
  double norm_sq = 0.0;
  for (ParameterGroup* g : groups) {
    if (g->frozen) continue;
    for (Tensor& p : g->params) {
      const double s = g->grad_scale;
      for (float gv : p.grad()) {
        const double x = s * gv;
        norm_sq += x * x;
      }
    }
  }
  const double norm = std::sqrt(norm_sq);
  double clip_factor = 1.0;
  if (config.clip_norm > 0.0 && norm > config.clip_norm) {
    clip_factor = config.clip_norm / norm;
  }

  const double bc1 = 1.0 - std::pow(static_cast<double>(config.beta1), static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(config.beta2), static_cast<double>(t));

  for (ParameterGroup* g : groups) {
    if (g->frozen) continue;
    for (Tensor& p : g->params) {
      if (p.name().empty()) throw StateError("adam_step: unnamed parameter in group " + g->name);
      AdamState::Slot& slot = state.slots_[p.name()];
      const size_t n = p.values().size();
      if (slot.m.empty()) {
        slot.m.assign(n, 0.0f);
        slot.v.assign(n, 0.0f);
      } else if (slot.m.size() != n) {
        throw StateError("adam_step: moment size mismatch for " + p.name());
      }
      auto grad = p.grad();
      auto vals = p.values_mut();
      const double scale = g->grad_scale * clip_factor;
      for (size_t i = 0; i < n; ++i) {
        const double gv = scale * grad[i];
        const double m = config.beta1 * slot.m[i] + (1.0 - config.beta1) * gv;
        const double v = config.beta2 * slot.v[i] + (1.0 - config.beta2) * gv * gv;
        slot.m[i] = static_cast<float>(m);
        slot.v[i] = static_cast<float>(v);
        const double m_hat = static_cast<double>(slot.m[i]) / bc1;
        const double v_hat = static_cast<double>(slot.v[i]) / bc2;
        double update = m_hat / (std::sqrt(v_hat) + config.eps);
        if (config.weight_decay != 0.0f) update += config.weight_decay * vals[i];
        vals[i] = static_cast<float>(vals[i] - static_cast<double>(lr) * update);
      }
    }
  }

  for (ParameterGroup* g : groups) {
    for (Tensor& p : g->params) p.zero_grad();
  }
  return norm;
}

LrSchedule LrSchedule::warmup_linear_decay(int64_t warmup, double peak, int64_t total) {
  if (warmup < 0 || total <= warmup) throw ConfigError("schedule: need 0 <= warmup < total");
  LrSchedule s;
  s.kind = Kind::kWarmupLinearDecay;
  s.warmup_steps = warmup;
  s.peak_lr = peak;
  s.total_steps = total;
  return s;
}

LrSchedule LrSchedule::warmup_hold_halve(int64_t warmup, double peak, int64_t steps_per_epoch,
                                         int64_t decay_end_epoch) {
  if (steps_per_epoch < 1) throw ConfigError("schedule: steps_per_epoch must be >= 1");
  if (decay_end_epoch * steps_per_epoch <= warmup) {
    throw ConfigError("schedule: decay window must start after warmup");
  }
  LrSchedule s;
  s.kind = Kind::kWarmupHoldHalve;
  s.warmup_steps = warmup;
  s.peak_lr = peak;
  s.steps_per_epoch = steps_per_epoch;
  s.decay_end_epoch = decay_end_epoch;
  return s;
}

double lr_at(const LrSchedule& s, int64_t step) {
  if (step < 0) throw ConfigError("lr_at: negative step");
  if (s.warmup_steps > 0 && step <= s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  switch (s.kind) {
    case LrSchedule::Kind::kWarmupLinearDecay: {
      if (step >= s.total_steps) return 0.0;
      return s.peak_lr * static_cast<double>(s.total_steps - step) /
             static_cast<double>(s.total_steps - s.warmup_steps);
    }
    case LrSchedule::Kind::kWarmupHoldHalve: {
      const int64_t decay_end = s.decay_end_epoch * s.steps_per_epoch;
      if (step <= decay_end) {
        // Linear from peak (at warmup) to peak/2 (end of the hold window).
        const double frac = static_cast<double>(step - s.warmup_steps) /
                            static_cast<double>(decay_end - s.warmup_steps);
        return s.peak_lr * (1.0 - 0.5 * frac);
      }
      const int64_t epoch = step / s.steps_per_epoch + 1;  // 1-based
      return (s.peak_lr / 2.0) * std::pow(0.5, static_cast<double>(epoch - 1 - s.decay_end_epoch));
    }
  }
  throw StateError("lr_at: unknown schedule kind");
}

}  // namespace seau::ad
