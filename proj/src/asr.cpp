// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/asr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "seau/error.hpp"

namespace seau::asr {

using ad::Tensor;

AsrModel::AsrModel(const nn::EncoderConfig& enc_cfg, const nn::DecoderConfig& dec_cfg,
                   bool with_projection, RngStream init_rng)
    : encoder(enc_cfg, init_rng.fork("enc")), decoder(dec_cfg, init_rng.fork("dec")) {
  if (enc_cfg.model_dim != dec_cfg.model_dim) {
    throw ConfigError("asr model: encoder dim " + std::to_string(enc_cfg.model_dim) +
                      " != decoder dim " + std::to_string(dec_cfg.model_dim));
  }
  if (with_projection) {
    const int64_t d = enc_cfg.model_dim;
    nn::Linear proj;
    proj.w = projection_group.add(
        "w", Tensor::randn({d, d}, init_rng.fork("proj"), 1.0f / std::sqrt(static_cast<float>(d))));
    proj.b = projection_group.add("b", Tensor::zeros({d}, true));
    projection = proj;
  }
}

std::vector<ad::ParameterGroup*> AsrModel::groups() {
  std::vector<ad::ParameterGroup*> g = {&encoder.extractor_group(), &encoder.block_group(),
                                        &decoder.group()};
  if (projection.has_value()) g.push_back(&projection_group);
  return g;
}

Tensor AsrModel::encode(const FloatMatrix& features, bool train, RngStream rng) {
  const FloatMatrix* input = &features;
  FloatMatrix augmented;
  if (train && use_specaugment) {
    augmented = features;
    nn::specaugment_inplace(augmented, specaugment, rng.fork("specaug"));
    input = &augmented;
  }
  Tensor h = encoder.forward(*input, train, rng.fork("enc")).final;
  if (projection.has_value()) h = nn::linear(h, *projection);
  return h;
}

nlohmann::json AsrModel::arch_json(const std::string& kind) const {
  return {{"kind", kind},
          {"encoder", encoder.config().to_json()},
          {"decoder", decoder.config().to_json()},
          {"has_projection", projection.has_value()}};
}

ad::Checkpoint AsrModel::to_checkpoint(const std::string& kind) const {
  ad::Checkpoint ckpt;
  ckpt.config = arch_json(kind);
  auto* self = const_cast<AsrModel*>(this);
  std::vector<const ad::ParameterGroup*> groups;
  for (auto* g : self->groups()) groups.push_back(g);
  ckpt.add_groups(groups);
  return ckpt;
}

AsrModel AsrModel::from_checkpoint(const ad::Checkpoint& ckpt) {
  if (!ckpt.config.contains("encoder") || !ckpt.config.contains("decoder")) {
    throw CheckpointError("checkpoint does not describe an ASR model");
  }
  AsrModel model(nn::EncoderConfig::from_json(ckpt.config["encoder"]),
                 nn::DecoderConfig::from_json(ckpt.config["decoder"]),
                 ckpt.config.value("has_projection", false), RngStream(0));
  ckpt.load_into_groups(model.groups());
  return model;
}

TrainResult train_asr(AsrModel& model, const BpeModel& bpe, const LabeledData& data,
                      const TrainOptions& options, const std::filesystem::path& out_dir,
                      const std::string& checkpoint_name, const std::string& kind) {
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  std::vector<size_t> usable;
  for (size_t i = 0; i < data.transcripts.size(); ++i) {
    if (data.transcripts[i].empty()) {
      ++result.skipped_empty;
    } else {
      usable.push_back(i);
    }
  }
  if (usable.empty()) throw DataError("train: no non-empty transcripts");

  model.encoder.extractor_group().frozen = options.freeze_extractor;
  model.encoder.extractor_group().grad_scale = options.extractor_grad_scale;

  ad::AdamState adam;
  ad::AdamConfig adam_cfg;
  adam_cfg.clip_norm = options.clip_norm;
  RngStream root(options.seed);

  const int64_t n = static_cast<int64_t>(usable.size());
  const int64_t batch = std::min<int64_t>(options.batch_size, n);
  const int64_t steps_per_epoch = (n + batch - 1) / batch;

  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::trunc);
  const auto t0 = std::chrono::steady_clock::now();

  int64_t global_step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    // Per-epoch permutation, a pure function of (seed, epoch).
    std::vector<size_t> perm = usable;
    RngStream perm_rng = root.fork("perm").fork(static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = perm_rng.uniform_int(0, i + 1);
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }

    for (int64_t b = 0; b < steps_per_epoch; ++b, ++global_step) {
      RngStream step_rng = root.fork("step").fork(static_cast<uint64_t>(global_step));
      const float lr = static_cast<float>(ad::lr_at(options.schedule, global_step + 1));
      const int64_t begin = b * batch;
      const int64_t count = std::min<int64_t>(batch, n - begin);

      double batch_loss = 0.0;
      for (int64_t k = 0; k < count; ++k) {
        const size_t idx = perm[static_cast<size_t>(begin + k)];
        RngStream slot_rng = step_rng.fork("slot").fork(static_cast<uint64_t>(k));
        std::vector<int> tokens = bpe.encode_target(data.transcripts[idx]);
        std::vector<int> input(tokens.begin(), tokens.end() - 1);
        std::vector<int> target(tokens.begin() + 1, tokens.end());
        std::vector<uint8_t> mask(target.size(), 1);

        Tensor enc = model.encode(data.features[idx], /*train=*/true, slot_rng.fork("enc"));
        Tensor logits = model.decoder.forward(enc, input, /*train=*/true, slot_rng.fork("dec"));
        Tensor ce = ad::cross_entropy(logits, target, mask);
        ad::backward(ad::scale(ce, 1.0f / static_cast<float>(count)));
        batch_loss += ce.scalar();
      }
      batch_loss /= static_cast<double>(count);
      if (global_step == 0) result.initial_loss = batch_loss;
      result.final_loss = batch_loss;
      ad::adam_step(model.groups(), adam, adam_cfg, lr);

      if (options.log_every > 0 && (global_step + 1) % options.log_every == 0) {
        const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0);
        nlohmann::json line = {{"step", global_step + 1},
                               {"epoch", epoch + 1},
                               {"loss", batch_loss},
                               {"lr", lr},
                               {"wall_ms", wall.count()}};
        metrics << line.dump() << '\n';
        metrics.flush();
      }
    }
  }
  result.steps = global_step;

  ad::Checkpoint ckpt = model.to_checkpoint(kind);
  ckpt.config["seed"] = options.seed;
  ckpt.config["trainer_step"] = global_step;
  ckpt.config["skipped_empty"] = result.skipped_empty;
  result.checkpoint = out_dir / (checkpoint_name + ".bin");
  ckpt.save(result.checkpoint);
  return result;
}

AsrModel build_finetune_model(const nn::EncoderConfig& enc_cfg, const nn::DecoderConfig& dec_cfg,
                              const FinetuneOptions& options, RngStream init_rng) {
  AsrModel model(enc_cfg, dec_cfg, /*with_projection=*/true, init_rng);
  if (!options.init_checkpoint.empty()) {
    ad::Checkpoint ckpt = ad::Checkpoint::load(options.init_checkpoint);
    // Only the encoder (extractor + blocks) comes from pre-training; the
    // projection and decoder stay freshly initialized.
    ckpt.load_into_groups(model.encoder.groups());
  }
  model.encoder.extractor_group().frozen = options.freeze_extractor;
  return model;
}

namespace {

// log-softmax of one logits row, computed host-side in double.
std::vector<double> row_log_probs(const Tensor& logits, int64_t row) {
  const int64_t vocab = logits.dim(1);
  const float* z = logits.values().data() + row * vocab;
  double mx = z[0];
  for (int64_t i = 1; i < vocab; ++i) mx = std::max(mx, static_cast<double>(z[i]));
  double lse = 0.0;
  for (int64_t i = 0; i < vocab; ++i) lse += std::exp(static_cast<double>(z[i]) - mx);
  lse = std::log(lse) + mx;
  std::vector<double> lp(static_cast<size_t>(vocab));
  for (int64_t i = 0; i < vocab; ++i) lp[static_cast<size_t>(i)] = static_cast<double>(z[i]) - lse;
  return lp;
}

struct Hypothesis {
  std::vector<int> tokens;  // BOS-prefixed
  double logp = 0.0;
  bool finished = false;
  bool truncated = false;
  int emitted() const { return static_cast<int>(tokens.size()) - 1; }
  double normalized() const { return logp / std::max(1, emitted()); }
};

Hypothesis search(AsrModel& model, const Tensor& enc, int width, int64_t max_len) {
  std::vector<Hypothesis> beams = {Hypothesis{{BpeModel::kBos}, 0.0, false, false}};
  std::vector<Hypothesis> finished;
  for (int64_t step = 0; step < max_len && !beams.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& beam : beams) {
      Tensor logits = model.decoder.forward(enc, beam.tokens, /*train=*/false, RngStream(0));
      std::vector<double> lp = row_log_probs(logits, logits.dim(0) - 1);
      // Top `width` continuations, ties by token id.
      std::vector<int> order(lp.size());
      for (size_t i = 0; i < lp.size(); ++i) order[i] = static_cast<int>(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return lp[static_cast<size_t>(a)] > lp[static_cast<size_t>(b)]; });
      const int take = std::min<int>(width, static_cast<int>(order.size()));
      for (int i = 0; i < take; ++i) {
        Hypothesis next = beam;
        next.tokens.push_back(order[static_cast<size_t>(i)]);
        next.logp += lp[static_cast<size_t>(order[static_cast<size_t>(i)])];
        next.finished = order[static_cast<size_t>(i)] == BpeModel::kEos;
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.logp > b.logp; });
    beams.clear();
    for (Hypothesis& c : candidates) {
      if (c.finished) {
        finished.push_back(std::move(c));
      } else if (static_cast<int>(beams.size()) < width) {
        beams.push_back(std::move(c));
      }
      if (static_cast<int>(finished.size()) >= width &&
          static_cast<int>(beams.size()) >= width) {
        break;
      }
    }
  }
  for (Hypothesis& b : beams) {
    b.truncated = true;
    finished.push_back(b);
  }
  if (finished.empty()) throw StateError("decode: no hypothesis produced");
  auto best = std::max_element(finished.begin(), finished.end(),
                               [](const Hypothesis& a, const Hypothesis& b) {
                                 return a.normalized() < b.normalized();
                               });
  return *best;
}

}  // namespace

DecodeResult decode_utterance(AsrModel& model, const BpeModel& bpe, const FloatMatrix& features,
                              int beam) {
  if (beam < 1) throw ConfigError("decode: beam must be >= 1");
  if (features.rows == 0) throw DataError("decode: empty feature input");
  Tensor enc = model.encode(features, /*train=*/false, RngStream(0));
  const int64_t max_len = 2 * enc.dim(0);

  Hypothesis best = search(model, enc, beam, max_len);
  if (beam > 1) {
    // The greedy path can fall out of a width-limited beam; keeping it in the
    // pool makes wider beams no worse under the shared normalization.
    Hypothesis greedy = search(model, enc, 1, max_len);
    if (greedy.normalized() > best.normalized()) best = greedy;
  }

  DecodeResult result;
  result.text = bpe.decode(best.tokens);
  result.score = best.normalized();
  result.truncated = best.truncated;
  return result;
}

}  // namespace seau::asr
