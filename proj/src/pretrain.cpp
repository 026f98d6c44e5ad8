// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "seau/checkpoint.hpp"
#include "seau/error.hpp"

namespace seau::pretrain {

using ad::Tensor;

void MaskSpec::validate() const {
  if (mask_prob <= 0.0 || mask_prob >= 1.0) throw ConfigError("mask: mask_prob in (0,1)");
  if (span_len < 1) throw ConfigError("mask: span_len must be >= 1");
}

std::vector<uint8_t> sample_mask(int64_t t_len, const MaskSpec& spec, RngStream rng) {
  spec.validate();
  if (t_len < spec.span_len) {
    throw DataError("mask: sequence of " + std::to_string(t_len) + " steps is shorter than span " +
                    std::to_string(spec.span_len));
  }
  for (uint64_t attempt = 0;; ++attempt) {
    RngStream draw = rng.fork(attempt);
    std::vector<uint8_t> mask(static_cast<size_t>(t_len), 0);
    bool any = false;
    for (int64_t t = 0; t < t_len; ++t) {
      if (draw.uniform() < spec.mask_prob) {
        for (int64_t k = t; k < std::min(t_len, t + spec.span_len); ++k) {
          mask[static_cast<size_t>(k)] = 1;
        }
        any = true;
      }
    }
    if (any) return mask;
  }
}

PredictionHead::PredictionHead(int64_t model_dim, int64_t projection_dim, int n_units,
                               RngStream rng) {
  if (n_units < 2) throw ConfigError("prediction head: need at least 2 units");
  w = group.add("w", Tensor::randn({model_dim, projection_dim}, rng.fork("w"),
                                   1.0f / std::sqrt(static_cast<float>(model_dim))));
  embeddings = group.add("embeddings",
                         Tensor::randn({n_units, projection_dim}, rng.fork("e"),
                                       1.0f / std::sqrt(static_cast<float>(projection_dim))));
  mask_emb = group.add("mask_emb", Tensor::randn({model_dim}, rng.fork("m"), 0.1f));
}

Tensor cosine_unit_logits(const PredictionHead& head, const Tensor& hidden) {
  Tensor projected = ad::row_l2_normalize(ad::matmul(hidden, head.w));
  Tensor units = ad::row_l2_normalize(head.embeddings);
  return ad::scale(ad::matmul(projected, ad::transpose(units)), 1.0f / head.tau);
}

Tensor unit_distribution(const PredictionHead& head, const Tensor& h_t) {
  if (h_t.rank() != 1) {
    throw ShapeError("unit_distribution: expects a vector, got " + ad::shape_str(h_t.shape()));
  }
  Tensor logits = cosine_unit_logits(head, ad::reshape(h_t, {1, h_t.dim(0)}));
  return ad::reshape(ad::softmax_rows(logits), {head.embeddings.dim(0)});
}

Tensor masked_prediction_loss(const Tensor& logits, const std::vector<int>& units,
                              const std::vector<uint8_t>& mask) {
  return ad::cross_entropy(logits, units, mask);
}

void PretrainData::validate() const {
  if (features.empty() || features.size() != units.size()) {
    throw DataError("pretrain data: feature/unit list mismatch");
  }
  if (n_units < 2) throw ConfigError("pretrain data: n_units must be >= 2");
  for (size_t i = 0; i < features.size(); ++i) {
    const int64_t t_sub = nn::subsampled_length(features[i].rows);
    if (t_sub != static_cast<int64_t>(units[i].size())) {
      throw DataError("pretrain data: utterance " + std::to_string(i) + " has " +
                      std::to_string(units[i].size()) + " units for " +
                      std::to_string(features[i].rows) + " frames (want " + std::to_string(t_sub) +
                      ")");
    }
    for (uint16_t u : units[i]) {
      if (u >= n_units) {
        throw DataError("pretrain data: unit id " + std::to_string(u) + " out of range");
      }
    }
  }
}

PretrainResult pretrain_loop(const nn::EncoderConfig& encoder_config, const PretrainConfig& config,
                             const PretrainData& data, const std::filesystem::path& out_dir,
                             const std::filesystem::path& resume_from) {
  data.validate();
  std::filesystem::create_directories(out_dir);
  RngStream root(config.seed);

  nn::Encoder encoder(encoder_config, root.fork("encoder"));
  PredictionHead head(encoder_config.model_dim, encoder_config.projection_dim, data.n_units,
                      root.fork("head"));
  encoder.extractor_group().grad_scale = config.extractor_grad_scale;

  std::vector<ad::ParameterGroup*> groups = {&encoder.extractor_group(), &encoder.block_group(),
                                             &head.group};
  ad::AdamState adam;
  ad::AdamConfig adam_cfg;
  adam_cfg.clip_norm = config.clip_norm;
  int64_t start_step = 0;
  if (!resume_from.empty()) {
    ad::Checkpoint ckpt = ad::Checkpoint::load(resume_from);
    ckpt.load_into_groups(groups);
    adam = ckpt.extract_adam();
    start_step = ckpt.config.value("trainer_step", int64_t{0});
  }

  const ad::LrSchedule schedule =
      ad::LrSchedule::warmup_linear_decay(config.warmup_steps, config.peak_lr, config.steps);

  auto save_checkpoint = [&](const std::filesystem::path& path, int64_t step) {
    ad::Checkpoint ckpt;
    ckpt.config["kind"] = "pretrain";
    ckpt.config["encoder"] = encoder_config.to_json();
    ckpt.config["head"] = {{"projection_dim", encoder_config.projection_dim},
                           {"n_units", data.n_units},
                           {"tau", head.tau}};
    ckpt.config["trainer_step"] = step;
    ckpt.config["seed"] = config.seed;
    ckpt.add_groups({&encoder.extractor_group(), &encoder.block_group(), &head.group});
    ckpt.add_adam(adam);
    ckpt.save(path);
  };

  std::ofstream metrics(out_dir / "metrics.jsonl", start_step == 0 ? std::ios::trunc : std::ios::app);
  const auto t0 = std::chrono::steady_clock::now();
  PretrainResult result;

  for (int64_t step = start_step; step < config.steps; ++step) {
    RngStream step_rng = root.fork("step").fork(static_cast<uint64_t>(step));
    const float lr = static_cast<float>(ad::lr_at(schedule, step + 1));

    double batch_loss = 0.0, batch_acc = 0.0;
    for (int slot = 0; slot < config.batch_size; ++slot) {
      RngStream slot_rng = step_rng.fork("slot").fork(static_cast<uint64_t>(slot));
      const size_t idx = static_cast<size_t>(
          slot_rng.fork("pick").uniform_int(0, static_cast<int64_t>(data.features.size())));
      const FloatMatrix& feats = data.features[idx];
      const int64_t t_sub = nn::subsampled_length(feats.rows);

      std::vector<uint8_t> mask = sample_mask(t_sub, config.mask, slot_rng.fork("mask"));
      auto fwd = encoder.forward(feats, /*train=*/true, slot_rng.fork("fwd"), &mask,
                                 &head.mask_emb);
      Tensor logits = cosine_unit_logits(head, fwd.final);
      std::vector<int> targets(data.units[idx].begin(), data.units[idx].end());
      Tensor ce = masked_prediction_loss(logits, targets, mask);
      Tensor penalty = ad::mean(ad::mul(fwd.extractor_out, fwd.extractor_out));
      Tensor loss = ad::add(ce, ad::scale(penalty, static_cast<float>(config.activation_penalty)));
      ad::backward(ad::scale(loss, 1.0f / static_cast<float>(config.batch_size)));

      batch_loss += ce.scalar();
      batch_acc += ad::masked_accuracy(logits, targets, mask);
    }
    ad::adam_step(groups, adam, adam_cfg, lr);

    batch_loss /= config.batch_size;
    batch_acc /= config.batch_size;
    result.final_loss = batch_loss;
    result.final_masked_acc = batch_acc;

    if (config.log_every > 0 && ((step + 1) % config.log_every == 0 || step + 1 == config.steps)) {
      const auto wall =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
      nlohmann::json line = {{"step", step + 1},
                             {"loss", batch_loss},
                             {"masked_acc", batch_acc},
                             {"lr", lr},
                             {"wall_ms", wall.count()}};
      metrics << line.dump() << '\n';
      metrics.flush();
    }
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        step + 1 < config.steps) {
      save_checkpoint(out_dir / ("ckpt_step" + std::to_string(step + 1) + ".bin"), step + 1);
    }
  }

  result.checkpoint = out_dir / "pretrain_final.bin";
  save_checkpoint(result.checkpoint, config.steps);
  return result;
}

}  // namespace seau::pretrain
