// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seau/checkpoint.hpp"
#include "seau/matrix.hpp"
#include "seau/nn.hpp"

namespace seau::asr {

// Greedy merge-based subword tokenizer.  Spaces are ordinary symbols, so
// encode/decode round-trips any training transcript exactly.
class BpeModel {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  static BpeModel train(const std::vector<std::string>& transcripts, int n_merges);

  std::vector<int> encode(const std::string& text) const;
  // BOS + encode(text) + EOS, ready for teacher forcing.
  std::vector<int> encode_target(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;  // drops special ids
  int vocab_size() const { return static_cast<int>(id_to_token_.size()) + 4; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> id_to_token_;       // id = 4 + index
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> apply_merges(const std::string& word) const;
};

struct WerCounts {
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;
  int64_t n_ref = 0;
  double rate() const;
};

// Word-level Levenshtein with uniform costs.  Empty reference is an error.
WerCounts wer(const std::string& hyp, const std::string& ref);

// Encoder-decoder ASR model; fine-tuned models insert a linear projection
// between encoder and decoder.
struct AsrModel {
  nn::Encoder encoder;
  nn::Decoder decoder;
  std::optional<nn::Linear> projection;
  ad::ParameterGroup projection_group{"projection"};
  nn::SpecAugmentConfig specaugment;
  bool use_specaugment = true;

  AsrModel(const nn::EncoderConfig& enc_cfg, const nn::DecoderConfig& dec_cfg,
           bool with_projection, RngStream init_rng);

  std::vector<ad::ParameterGroup*> groups();
  // Encoder (+ projection) output for decoding or training.
  ad::Tensor encode(const FloatMatrix& features, bool train, RngStream rng);
  nlohmann::json arch_json(const std::string& kind) const;
  ad::Checkpoint to_checkpoint(const std::string& kind) const;
  static AsrModel from_checkpoint(const ad::Checkpoint& ckpt);
};

struct LabeledData {
  std::vector<std::string> ids;
  std::vector<FloatMatrix> features;  // normalized fbank
  std::vector<std::string> transcripts;
};

struct TrainOptions {
  int epochs = 15;
  int batch_size = 4;
  ad::LrSchedule schedule;
  uint64_t seed = 0;
  double clip_norm = 5.0;
  float extractor_grad_scale = 1.0f;
  bool freeze_extractor = false;
  int64_t log_every = 20;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int64_t steps = 0;
  int skipped_empty = 0;
};

// Teacher-forced cross-entropy training (shared by the supervised and
// fine-tuning stages).  Writes metrics.jsonl and <name>.bin under out_dir.
TrainResult train_asr(AsrModel& model, const BpeModel& bpe, const LabeledData& data,
                      const TrainOptions& options, const std::filesystem::path& out_dir,
                      const std::string& checkpoint_name, const std::string& kind);

struct FinetuneOptions {
  std::filesystem::path init_checkpoint;  // pretrain checkpoint; empty = from scratch
  bool freeze_extractor = true;
  TrainOptions train;
};

// Builds the fine-tuning model: encoder initialized from the pre-trained
// checkpoint, fresh projection and decoder.
AsrModel build_finetune_model(const nn::EncoderConfig& enc_cfg, const nn::DecoderConfig& dec_cfg,
                              const FinetuneOptions& options, RngStream init_rng);

struct DecodeResult {
  std::string text;
  double score = 0.0;  // length-normalized log-probability
  bool truncated = false;
};

// beam == 1 is greedy argmax; beam > 1 is length-normalized beam search.
// Stops at EOS or 2 * T' steps.
DecodeResult decode_utterance(AsrModel& model, const BpeModel& bpe, const FloatMatrix& features,
                              int beam);

}  // namespace seau::asr
