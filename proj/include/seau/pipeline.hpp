// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "seau/asr.hpp"
#include "seau/corpus.hpp"
#include "seau/nn.hpp"
#include "seau/pretrain.hpp"
#include "seau/quantizer.hpp"

namespace seau::pipeline {

// Every knob of the experiment in one place.  Serializes to a flat
// `key = value` text file; unknown keys are rejected.
struct ExperimentConfig {
  std::string preset = "toy";
  uint64_t seed = 7;

  corpus::GeneratorConfig corpus;
  int n_mels = 40;
  int mfcc_ceps = 13;
  bool mfcc_deltas = true;

  nn::EncoderConfig encoder;           // layerdrop here applies to ASR training
  float pretrain_layerdrop = 0.1f;     // layerdrop during masked pre-training
  int decoder_layers = 2;
  nn::SpecAugmentConfig specaugment;

  int bpe_merges = 200;

  int clusters = 100;
  int seau_layer = -1;  // -1: round(0.75 * n_blocks)
  int kmeans_max_iter = 50;
  double kmeans_tol = 1e-4;
  int64_t kmeans_sample_cap = 200000;

  int64_t pretrain_steps = 1000;
  int pretrain_batch = 8;
  double pretrain_mask_prob = 0.12;
  int pretrain_span_len = 4;
  double pretrain_peak_lr = 2e-3;
  int64_t pretrain_warmup = 100;
  double activation_penalty = 1e-4;
  double extractor_grad_scale = 0.1;
  int64_t pretrain_log_every = 25;

  int supervised_epochs = 15;
  int supervised_batch = 8;
  double supervised_peak_lr = 1.5e-3;
  int64_t supervised_warmup = 50;

  int finetune_epochs = 20;
  int finetune_batch = 8;
  double finetune_peak_lr = 1.5e-3;
  int64_t finetune_warmup = 50;
  bool freeze_extractor = true;
  int64_t decay_end_epoch = 15;

  int decode_beam = 1;
  double grad_clip = 5.0;

  static ExperimentConfig preset_toy();
  // Published-scale values: 16x512 conformer, 1000 clusters, 400k steps,
  // 15k merges, specaugment F=15/T=40, the 5e-4 and 7e-4 schedules.
  static ExperimentConfig preset_paper();
  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  void validate() const;
  nn::DecoderConfig decoder_config(int vocab_size) const;
};

// Per-stage run records with input/output content hashes; a stage reruns only
// when its input hash changes or the caller forces it.
class Ledger {
 public:
  struct Entry {
    std::string status;  // "ok" or an error string
    uint64_t input_hash = 0;
    uint64_t output_hash = 0;
    int64_t wall_ms = 0;
    std::string version;
  };

  static Ledger load(const std::filesystem::path& exp_dir);
  void save() const;  // atomic replace

  bool up_to_date(const std::string& stage, uint64_t input_hash) const;
  const Entry* find(const std::string& stage) const;
  void record(const std::string& stage, Entry entry);

 private:
  std::filesystem::path path_;
  std::map<std::string, Entry> entries_;
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  uint64_t input_hash = 0;
  uint64_t output_hash = 0;
  int64_t wall_ms = 0;
};

// ---- stages ----
// Artifacts live under exp_dir: corpus/, features/{fbank,mfcc}/,
// supervised*/, units/<tag>/, pretrain/<tag>/, finetune/<tag>/,
// decode/<tag>/, score/<tag>/.

StageOutcome run_corpus_gen(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                            bool force = false);
StageOutcome run_featurize(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                           bool force = false);

struct SupervisedOptions {
  std::string tag = "supervised";
  double label_fraction = 1.0;  // seeded subset of the labeled split
  bool force = false;
};
StageOutcome run_train_supervised(const ExperimentConfig& cfg,
                                  const std::filesystem::path& exp_dir,
                                  const SupervisedOptions& options = {});

struct ExtractUnitsOptions {
  std::string source = "seau";  // "seau" or "mfcc"
  int layer = -1;               // seau only; -1 uses the config default
  int clusters = -1;            // -1 uses the config value
  std::string tag;              // output tag; defaults to source
  // Override the supervised checkpoint (e.g. one trained out-of-domain).
  std::filesystem::path checkpoint;
  bool force = false;
};
StageOutcome run_extract_units(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                               const ExtractUnitsOptions& options);

StageOutcome run_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                          const std::string& units_tag, bool force = false);

struct FinetuneStageOptions {
  std::string init = "none";  // "none" or a pretrain tag
  bool force = false;
};
StageOutcome run_finetune(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                          const FinetuneStageOptions& options);

// model: "supervised" or "finetune-<init>".
StageOutcome run_decode(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                        const std::string& model, int beam = -1, bool force = false);
StageOutcome run_score(const ExperimentConfig& cfg, const std::filesystem::path& exp_dir,
                       const std::string& model, bool force = false);

// ---- ablation harness ----

struct AblationCell {
  std::string domain;  // "in" or "out"
  double fraction = 1.0;
  int clusters = 0;
  double pnmi = 0.0;
  double wer = 0.0;
  std::string status;  // "ok" or the error message
  std::string config_hash;
};

struct AblationOptions {
  std::vector<double> fractions = {0.25, 1.0};
  std::vector<int> cluster_counts = {8, 32};
  std::vector<std::string> domains = {"in"};
  uint64_t out_domain_seed = 0;  // 0: derived from the root seed
};

// Cross product of {fraction} x {domain} x {clusters}: supervised model,
// SEAU units + PNMI, pre-train, fine-tune, WER.  Cell failures are recorded
// and the harness continues.  Writes ablation.csv and ablation.json.
std::vector<AblationCell> run_ablation(const ExperimentConfig& cfg,
                                       const std::filesystem::path& exp_dir,
                                       const AblationOptions& options);

// ---- shared helpers (also used by the acceptance suite) ----

asr::LabeledData load_labeled_split(const std::filesystem::path& exp_dir, const std::string& split,
                                    double fraction = 1.0, uint64_t fraction_seed = 0);
pretrain::PretrainData load_pretrain_data(const std::filesystem::path& exp_dir,
                                          const std::string& units_tag);
quantizer::UnitQualityReport read_quality_report(const std::filesystem::path& exp_dir,
                                                 const std::string& units_tag);
nlohmann::json read_score_report(const std::filesystem::path& exp_dir, const std::string& model);

uint64_t hash_file(const std::filesystem::path& path, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t hash_json(const nlohmann::json& j, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace seau::pipeline
