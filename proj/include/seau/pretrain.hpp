// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <vector>

#include "seau/matrix.hpp"
#include "seau/nn.hpp"
#include "seau/optim.hpp"
#include "seau/rng.hpp"
#include "seau/tensor.hpp"

namespace seau::pretrain {

struct MaskSpec {
  double mask_prob = 0.08;  // per-step probability of starting a span
  int span_len = 10;
  void validate() const;
};

// Span mask over subsampled steps: each index starts a span of span_len with
// probability mask_prob; overlaps union.  Resamples from a derived stream
// until at least one step is masked.
std::vector<uint8_t> sample_mask(int64_t t_len, const MaskSpec& spec, RngStream rng);

// Unit-prediction head: p(c | t) = softmax_c( cos(W h_t, e_c) / tau ).
struct PredictionHead {
  ad::Tensor w;           // model_dim x projection_dim
  ad::Tensor embeddings;  // n_units x projection_dim
  ad::Tensor mask_emb;    // model_dim, substituted at masked steps
  float tau = 0.1f;
  ad::ParameterGroup group{"head"};

  PredictionHead(int64_t model_dim, int64_t projection_dim, int n_units, RngStream rng);
};

// Cosine logits for a whole hidden sequence: [T', n_units].
ad::Tensor cosine_unit_logits(const PredictionHead& head, const ad::Tensor& hidden);
// Distribution over units for one hidden vector; sums to 1 within 1e-6.
ad::Tensor unit_distribution(const PredictionHead& head, const ad::Tensor& h_t);
// Mean cross-entropy over masked steps only.
ad::Tensor masked_prediction_loss(const ad::Tensor& logits, const std::vector<int>& units,
                                  const std::vector<uint8_t>& mask);

struct PretrainConfig {
  int64_t steps = 400;
  int batch_size = 4;
  MaskSpec mask{0.12, 4};  // denser short spans suit short toy utterances
  double peak_lr = 5e-4;
  int64_t warmup_steps = 8000;
  double activation_penalty = 1e-4;  // L2 weight on extractor output
  float extractor_grad_scale = 0.1f;
  double clip_norm = 5.0;
  uint64_t seed = 0;
  int64_t log_every = 20;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
};

// In-memory dataset: normalized fbank features with frame-aligned unit
// targets at the subsampled rate.
struct PretrainData {
  std::vector<FloatMatrix> features;
  std::vector<std::vector<uint16_t>> units;
  int n_units = 0;
  void validate() const;
};

struct PretrainResult {
  std::filesystem::path checkpoint;
  double final_loss = 0.0;
  double final_masked_acc = 0.0;
};

// Masked-prediction training.  Every random draw is a pure function of
// (seed, step), so resuming from a checkpoint reproduces the uninterrupted
// run bit-exactly.  Metrics go to out_dir/metrics.jsonl, one JSON per line.
PretrainResult pretrain_loop(const nn::EncoderConfig& encoder_config, const PretrainConfig& config,
                             const PretrainData& data, const std::filesystem::path& out_dir,
                             const std::filesystem::path& resume_from = {});

}  // namespace seau::pretrain
