// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seau/binio.hpp"
#include "seau/error.hpp"
#include "seau/frontend.hpp"

namespace seau::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "seau-0.1.0";

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

// ---- config ----

ExperimentConfig ExperimentConfig::preset_toy() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::preset_paper() {
  ExperimentConfig cfg;
  cfg.preset = "paper";
  cfg.n_mels = 40;
  cfg.encoder = nn::EncoderConfig::paper();
  cfg.pretrain_layerdrop = 0.2f;
  cfg.decoder_layers = 6;
  cfg.specaugment = nn::SpecAugmentConfig::paper();
  cfg.bpe_merges = 15000;
  cfg.clusters = 1000;
  cfg.kmeans_sample_cap = 2000000;
  cfg.pretrain_steps = 400000;
  cfg.pretrain_batch = 8;
  cfg.pretrain_mask_prob = 0.08;
  cfg.pretrain_span_len = 10;
  cfg.pretrain_peak_lr = 5e-4;
  cfg.pretrain_warmup = 8000;
  cfg.extractor_grad_scale = 0.1;
  cfg.supervised_epochs = 15;
  cfg.supervised_peak_lr = 7e-4;
  cfg.supervised_warmup = 8000;
  cfg.finetune_peak_lr = 7e-4;
  cfg.finetune_warmup = 8000;
  cfg.finetune_epochs = 20;
  cfg.freeze_extractor = true;
  cfg.decay_end_epoch = 15;
  return cfg;
}

void ExperimentConfig::validate() const {
  corpus.validate();
  encoder.validate();
  specaugment.validate(n_mels);
  if (encoder.input_dim != n_mels) {
    throw ConfigError("config: encoder.input_dim " + std::to_string(encoder.input_dim) +
                      " must equal frontend.n_mels " + std::to_string(n_mels));
  }
  if (mfcc_ceps < 1 || mfcc_ceps > n_mels) throw ConfigError("config: mfcc_ceps out of range");
  if (clusters < 2) throw ConfigError("config: clusters must be >= 2");
  if (pretrain_steps < 1 || pretrain_batch < 1) throw ConfigError("config: bad pretrain sizes");
  if (decoder_layers < 1) throw ConfigError("config: decoder_layers must be >= 1");
}

nn::DecoderConfig ExperimentConfig::decoder_config(int vocab_size) const {
  nn::DecoderConfig dec;
  dec.n_layers = decoder_layers;
  dec.model_dim = encoder.model_dim;
  dec.ffn_dim = encoder.ffn_dim;
  dec.n_heads = encoder.n_heads;
  dec.vocab_size = vocab_size;
  dec.dropout = encoder.dropout;
  dec.max_target_len = 2048;
  return dec;
}

namespace {

struct KeyWriter {
  std::ostringstream os;
  template <typename T>
  void put(const char* key, const T& value) {
    os << key << " = " << value << '\n';
  }
};

}  // namespace

std::string ExperimentConfig::to_text() const {
  KeyWriter w;
  w.os.precision(12);
  w.put("preset", preset);
  w.put("seed", seed);
  w.put("corpus.n_phones", corpus.n_phones);
  w.put("corpus.signal_dim", corpus.signal_dim);
  w.put("corpus.lexicon_size", corpus.lexicon_size);
  w.put("corpus.word_min_phones", corpus.word_min_phones);
  w.put("corpus.word_max_phones", corpus.word_max_phones);
  w.put("corpus.dur_min", corpus.dur_min);
  w.put("corpus.dur_max", corpus.dur_max);
  w.put("corpus.target_frames", corpus.target_frames);
  w.put("corpus.snr_db", corpus.snr_db);
  w.put("corpus.gain_jitter", corpus.gain_jitter);
  w.put("corpus.tilt_jitter", corpus.tilt_jitter);
  w.put("corpus.amp_jitter", corpus.amp_jitter);
  w.put("corpus.n_labeled", corpus.n_labeled);
  w.put("corpus.n_unlabeled", corpus.n_unlabeled);
  w.put("corpus.n_finetune", corpus.n_finetune);
  w.put("corpus.n_test", corpus.n_test);
  w.put("frontend.n_mels", n_mels);
  w.put("frontend.mfcc_ceps", mfcc_ceps);
  w.put("frontend.mfcc_deltas", mfcc_deltas ? 1 : 0);
  w.put("encoder.n_blocks", encoder.n_blocks);
  w.put("encoder.model_dim", encoder.model_dim);
  w.put("encoder.ffn_dim", encoder.ffn_dim);
  w.put("encoder.n_heads", encoder.n_heads);
  w.put("encoder.conv_kernel", encoder.conv_kernel);
  w.put("encoder.dropout", encoder.dropout);
  w.put("encoder.layerdrop", encoder.layerdrop);
  w.put("encoder.projection_dim", encoder.projection_dim);
  w.put("encoder.extractor_channels", encoder.extractor_channels);
  w.put("encoder.pretrain_layerdrop", pretrain_layerdrop);
  w.put("decoder.n_layers", decoder_layers);
  w.put("specaugment.freq_width", specaugment.freq_mask_width);
  w.put("specaugment.time_width", specaugment.time_mask_width);
  w.put("specaugment.n_freq_masks", specaugment.n_freq_masks);
  w.put("specaugment.n_time_masks", specaugment.n_time_masks);
  w.put("bpe.merges", bpe_merges);
  w.put("quantizer.clusters", clusters);
  w.put("quantizer.layer", seau_layer);
  w.put("quantizer.kmeans_max_iter", kmeans_max_iter);
  w.put("quantizer.kmeans_tol", kmeans_tol);
  w.put("quantizer.sample_cap", kmeans_sample_cap);
  w.put("pretrain.steps", pretrain_steps);
  w.put("pretrain.batch", pretrain_batch);
  w.put("pretrain.mask_prob", pretrain_mask_prob);
  w.put("pretrain.span_len", pretrain_span_len);
  w.put("pretrain.peak_lr", pretrain_peak_lr);
  w.put("pretrain.warmup", pretrain_warmup);
  w.put("pretrain.activation_penalty", activation_penalty);
  w.put("pretrain.extractor_grad_scale", extractor_grad_scale);
  w.put("pretrain.log_every", pretrain_log_every);
  w.put("supervised.epochs", supervised_epochs);
  w.put("supervised.batch", supervised_batch);
  w.put("supervised.peak_lr", supervised_peak_lr);
  w.put("supervised.warmup", supervised_warmup);
  w.put("finetune.epochs", finetune_epochs);
  w.put("finetune.batch", finetune_batch);
  w.put("finetune.peak_lr", finetune_peak_lr);
  w.put("finetune.warmup", finetune_warmup);
  w.put("finetune.freeze_extractor", freeze_extractor ? 1 : 0);
  w.put("schedule.decay_end_epoch", decay_end_epoch);
  w.put("decode.beam", decode_beam);
  w.put("train.grad_clip", grad_clip);
  return w.os.str();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  // Preset first, then every other key overrides it.
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (!blank) throw ConfigError("config: bad line '" + line + "'");
      continue;
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  ExperimentConfig cfg;
  auto preset_it = kv.find("preset");
  if (preset_it != kv.end()) {
    if (preset_it->second == "toy") {
      cfg = preset_toy();
    } else if (preset_it->second == "paper") {
      cfg = preset_paper();
    } else {
      throw ConfigError("config: unknown preset '" + preset_it->second + "'");
    }
    kv.erase(preset_it);
  }

  auto as_i = [](const std::string& v) { return std::stoll(v); };
  auto as_d = [](const std::string& v) { return std::stod(v); };
  auto as_b = [](const std::string& v) { return v == "1" || v == "true"; };
  for (const auto& [key, value] : kv) {
    if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "corpus.n_phones") cfg.corpus.n_phones = static_cast<int>(as_i(value));
    else if (key == "corpus.signal_dim") cfg.corpus.signal_dim = static_cast<int>(as_i(value));
    else if (key == "corpus.lexicon_size") cfg.corpus.lexicon_size = static_cast<int>(as_i(value));
    else if (key == "corpus.word_min_phones") cfg.corpus.word_min_phones = static_cast<int>(as_i(value));
    else if (key == "corpus.word_max_phones") cfg.corpus.word_max_phones = static_cast<int>(as_i(value));
    else if (key == "corpus.dur_min") cfg.corpus.dur_min = static_cast<int>(as_i(value));
    else if (key == "corpus.dur_max") cfg.corpus.dur_max = static_cast<int>(as_i(value));
    else if (key == "corpus.target_frames") cfg.corpus.target_frames = static_cast<int>(as_i(value));
    else if (key == "corpus.snr_db") cfg.corpus.snr_db = as_d(value);
    else if (key == "corpus.gain_jitter") cfg.corpus.gain_jitter = as_d(value);
    else if (key == "corpus.tilt_jitter") cfg.corpus.tilt_jitter = as_d(value);
    else if (key == "corpus.amp_jitter") cfg.corpus.amp_jitter = as_d(value);
    else if (key == "corpus.n_labeled") cfg.corpus.n_labeled = static_cast<int>(as_i(value));
    else if (key == "corpus.n_unlabeled") cfg.corpus.n_unlabeled = static_cast<int>(as_i(value));
    else if (key == "corpus.n_finetune") cfg.corpus.n_finetune = static_cast<int>(as_i(value));
    else if (key == "corpus.n_test") cfg.corpus.n_test = static_cast<int>(as_i(value));
    else if (key == "frontend.n_mels") cfg.n_mels = static_cast<int>(as_i(value));
    else if (key == "frontend.mfcc_ceps") cfg.mfcc_ceps = static_cast<int>(as_i(value));
    else if (key == "frontend.mfcc_deltas") cfg.mfcc_deltas = as_b(value);
    else if (key == "encoder.n_blocks") cfg.encoder.n_blocks = static_cast<int>(as_i(value));
    else if (key == "encoder.model_dim") cfg.encoder.model_dim = static_cast<int>(as_i(value));
    else if (key == "encoder.ffn_dim") cfg.encoder.ffn_dim = static_cast<int>(as_i(value));
    else if (key == "encoder.n_heads") cfg.encoder.n_heads = static_cast<int>(as_i(value));
    else if (key == "encoder.conv_kernel") cfg.encoder.conv_kernel = static_cast<int>(as_i(value));
    else if (key == "encoder.dropout") cfg.encoder.dropout = static_cast<float>(as_d(value));
    else if (key == "encoder.layerdrop") cfg.encoder.layerdrop = static_cast<float>(as_d(value));
    else if (key == "encoder.projection_dim") cfg.encoder.projection_dim = static_cast<int>(as_i(value));
    else if (key == "encoder.extractor_channels") cfg.encoder.extractor_channels = static_cast<int>(as_i(value));
    else if (key == "encoder.pretrain_layerdrop") cfg.pretrain_layerdrop = static_cast<float>(as_d(value));
    else if (key == "decoder.n_layers") cfg.decoder_layers = static_cast<int>(as_i(value));
    else if (key == "specaugment.freq_width") cfg.specaugment.freq_mask_width = static_cast<int>(as_i(value));
    else if (key == "specaugment.time_width") cfg.specaugment.time_mask_width = static_cast<int>(as_i(value));
    else if (key == "specaugment.n_freq_masks") cfg.specaugment.n_freq_masks = static_cast<int>(as_i(value));
    else if (key == "specaugment.n_time_masks") cfg.specaugment.n_time_masks = static_cast<int>(as_i(value));
    else if (key == "bpe.merges") cfg.bpe_merges = static_cast<int>(as_i(value));
    else if (key == "quantizer.clusters") cfg.clusters = static_cast<int>(as_i(value));
    else if (key == "quantizer.layer") cfg.seau_layer = static_cast<int>(as_i(value));
    else if (key == "quantizer.kmeans_max_iter") cfg.kmeans_max_iter = static_cast<int>(as_i(value));
    else if (key == "quantizer.kmeans_tol") cfg.kmeans_tol = as_d(value);
    else if (key == "quantizer.sample_cap") cfg.kmeans_sample_cap = as_i(value);
    else if (key == "pretrain.steps") cfg.pretrain_steps = as_i(value);
    else if (key == "pretrain.batch") cfg.pretrain_batch = static_cast<int>(as_i(value));
    else if (key == "pretrain.mask_prob") cfg.pretrain_mask_prob = as_d(value);
    else if (key == "pretrain.span_len") cfg.pretrain_span_len = static_cast<int>(as_i(value));
    else if (key == "pretrain.peak_lr") cfg.pretrain_peak_lr = as_d(value);
    else if (key == "pretrain.warmup") cfg.pretrain_warmup = as_i(value);
    else if (key == "pretrain.activation_penalty") cfg.activation_penalty = as_d(value);
    else if (key == "pretrain.extractor_grad_scale") cfg.extractor_grad_scale = as_d(value);
    else if (key == "pretrain.log_every") cfg.pretrain_log_every = as_i(value);
    else if (key == "supervised.epochs") cfg.supervised_epochs = static_cast<int>(as_i(value));
    else if (key == "supervised.batch") cfg.supervised_batch = static_cast<int>(as_i(value));
    else if (key == "supervised.peak_lr") cfg.supervised_peak_lr = as_d(value);
    else if (key == "supervised.warmup") cfg.supervised_warmup = as_i(value);
    else if (key == "finetune.epochs") cfg.finetune_epochs = static_cast<int>(as_i(value));
    else if (key == "finetune.batch") cfg.finetune_batch = static_cast<int>(as_i(value));
    else if (key == "finetune.peak_lr") cfg.finetune_peak_lr = as_d(value);
    else if (key == "finetune.warmup") cfg.finetune_warmup = as_i(value);
    else if (key == "finetune.freeze_extractor") cfg.freeze_extractor = as_b(value);
    else if (key == "schedule.decay_end_epoch") cfg.decay_end_epoch = as_i(value);
    else if (key == "decode.beam") cfg.decode_beam = static_cast<int>(as_i(value));
    else if (key == "train.grad_clip") cfg.grad_clip = as_d(value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.encoder.input_dim = cfg.n_mels;
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_text(read_text_file(path));
}

// ---- ledger ----

Ledger Ledger::load(const fs::path& exp_dir) {
  Ledger ledger;
  ledger.path_ = exp_dir / "ledger.json";
  if (fs::exists(ledger.path_)) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(ledger.path_));
    for (auto& [stage, e] : j.at("stages").items()) {
      Entry entry;
      entry.status = e.at("status");
      entry.input_hash = std::stoull(e.at("input_hash").get<std::string>(), nullptr, 16);
      entry.output_hash = std::stoull(e.at("output_hash").get<std::string>(), nullptr, 16);
      entry.wall_ms = e.at("wall_ms");
      entry.version = e.at("version");
      ledger.entries_[stage] = entry;
    }
  }
  return ledger;
}

void Ledger::save() const {
  nlohmann::json stages = nlohmann::json::object();
  char hex[17];
  for (const auto& [stage, e] : entries_) {
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(e.input_hash));
    std::string in = hex;
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(e.output_hash));
    std::string out = hex;
    stages[stage] = {{"status", e.status},
                     {"input_hash", in},
                     {"output_hash", out},
                     {"wall_ms", e.wall_ms},
                     {"version", e.version}};
  }
  nlohmann::json j = {{"stages", stages}};
  fs::create_directories(path_.parent_path());
  write_file_atomic(path_, j.dump(2));
}

bool Ledger::up_to_date(const std::string& stage, uint64_t input_hash) const {
  auto it = entries_.find(stage);
  return it != entries_.end() && it->second.status == "ok" && it->second.input_hash == input_hash;
}

const Ledger::Entry* Ledger::find(const std::string& stage) const {
  auto it = entries_.find(stage);
  return it == entries_.end() ? nullptr : &it->second;
}

void Ledger::record(const std::string& stage, Entry entry) {
  entries_[stage] = std::move(entry);
  save();
}

// ---- hashing ----

uint64_t hash_file(const fs::path& path, uint64_t seed) {
  auto bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size(), seed);
}

uint64_t hash_json(const nlohmann::json& j, uint64_t seed) { return fnv1a64(j.dump(), seed); }

namespace {

uint64_t hash_dir_files(const fs::path& dir, uint64_t seed) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  uint64_t h = seed;
  for (const auto& f : files) {
    h = fnv1a64(f.filename().string(), h);
    h = hash_file(f, h);
  }
  return h;
}

template <typename Fn>
StageOutcome run_stage(const fs::path& exp_dir, const std::string& stage, uint64_t input_hash,
                       bool force, Fn body) {
  Ledger ledger = Ledger::load(exp_dir);
  StageOutcome outcome;
  outcome.stage = stage;
  outcome.input_hash = input_hash;
  if (!force && ledger.up_to_date(stage, input_hash)) {
    outcome.skipped = true;
    outcome.output_hash = ledger.find(stage)->output_hash;
    return outcome;
  }
  const int64_t t0 = now_ms();
  uint64_t output_hash = body();
  outcome.wall_ms = now_ms() - t0;
  outcome.output_hash = output_hash;
  Ledger::Entry entry;
  entry.status = "ok";
  entry.input_hash = input_hash;
  entry.output_hash = output_hash;
  entry.wall_ms = outcome.wall_ms;
  entry.version = kVersion;
  ledger.record(stage, entry);
  return outcome;
}

nlohmann::json corpus_json(const corpus::GeneratorConfig& c) {
  return {{"n_phones", c.n_phones},       {"signal_dim", c.signal_dim},
          {"lexicon_size", c.lexicon_size}, {"word_min", c.word_min_phones},
          {"word_max", c.word_max_phones},  {"dur_min", c.dur_min},
          {"dur_max", c.dur_max},           {"target_frames", c.target_frames},
          {"snr_db", c.snr_db},             {"gain_jitter", c.gain_jitter},
          {"tilt_jitter", c.tilt_jitter},   {"amp_jitter", c.amp_jitter},
          {"n_labeled", c.n_labeled},       {"n_unlabeled", c.n_unlabeled},
          {"n_finetune", c.n_finetune},     {"n_test", c.n_test}};
}

void require_artifact(const fs::path& path, const std::string& what,
                      const std::string& producing_stage) {
  if (!fs::exists(path)) {
    throw NotFoundError(what + " not found at " + path.string() + "; run " + producing_stage +
                        " first");
  }
}

uint64_t upstream_hash(const fs::path& exp_dir, const std::string& stage) {
  Ledger ledger = Ledger::load(exp_dir);
  const Ledger::Entry* e = ledger.find(stage);
  return e ? e->output_hash : 0;
}

// Keeps the warmup strictly inside the hold window when a tiny corpus makes
// epochs very short.
int64_t clamp_warmup(int64_t warmup, int64_t steps_per_epoch, int64_t decay_end_epoch) {
  return std::max<int64_t>(1, std::min(warmup, decay_end_epoch * steps_per_epoch / 3));
}

std::string labeled_train_split(const corpus::CorpusManifest& manifest) {
  return manifest.split("finetune").empty() ? "labeled" : "finetune";
}

}  // namespace

// ---- data loaders ----

asr::LabeledData load_labeled_split(const fs::path& exp_dir, const std::string& split,
                                    double fraction, uint64_t fraction_seed) {
  corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");
  auto entries = manifest.split(split);

  std::vector<size_t> order(entries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (fraction < 1.0) {
    RngStream rng = RngStream(fraction_seed).fork("label_fraction");
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }
    size_t keep = static_cast<size_t>(std::ceil(fraction * static_cast<double>(entries.size())));
    keep = std::max<size_t>(1, std::min(keep, entries.size()));
    order.resize(keep);
    std::sort(order.begin(), order.end());
  }

  asr::LabeledData data;
  for (size_t i : order) {
    corpus::FrameArchive arc =
        corpus::read_frame_archive(exp_dir / "features" / "fbank" / (entries[i]->id + ".bin"));
    data.ids.push_back(entries[i]->id);
    data.features.push_back(std::move(arc.frames));
    data.transcripts.push_back(std::move(arc.transcript));
  }
  return data;
}

pretrain::PretrainData load_pretrain_data(const fs::path& exp_dir, const std::string& units_tag) {
  corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");
  quantizer::Codebook codebook =
      quantizer::Codebook::load(exp_dir / "units" / units_tag / "codebook.bin");
  pretrain::PretrainData data;
  data.n_units = codebook.n_clusters();
  for (const corpus::ManifestEntry* e : manifest.split("unlabeled")) {
    corpus::FrameArchive arc =
        corpus::read_frame_archive(exp_dir / "features" / "fbank" / (e->id + ".bin"));
    std::vector<uint16_t> units =
        quantizer::read_unit_file(exp_dir / "units" / units_tag / (e->id + ".units"));
    if (static_cast<int64_t>(units.size()) != nn::subsampled_length(arc.frames.rows)) {
      throw DataError("pretrain data: utterance " + e->id + " has " +
                      std::to_string(units.size()) + " units for " +
                      std::to_string(arc.frames.rows) + " frames");
    }
    data.features.push_back(std::move(arc.frames));
    data.units.push_back(std::move(units));
  }
  return data;
}

quantizer::UnitQualityReport read_quality_report(const fs::path& exp_dir,
                                                 const std::string& units_tag) {
  nlohmann::json j =
      nlohmann::json::parse(read_text_file(exp_dir / "units" / units_tag / "quality.json"));
  quantizer::UnitQualityReport report;
  report.cluster_purity = j.at("cluster_purity");
  report.phone_purity = j.at("phone_purity");
  report.pnmi = j.at("pnmi");
  report.switch_rate = j.at("switch_rate");
  return report;
}

nlohmann::json read_score_report(const fs::path& exp_dir, const std::string& model) {
  return nlohmann::json::parse(read_text_file(exp_dir / "score" / model / "report.json"));
}

// ---- stages ----

StageOutcome run_corpus_gen(const ExperimentConfig& cfg, const fs::path& exp_dir, bool force) {
  cfg.validate();
  nlohmann::json in = {{"corpus", corpus_json(cfg.corpus)}, {"seed", cfg.seed}};
  return run_stage(exp_dir, "corpus-gen", hash_json(in), force, [&]() {
    corpus::generate_corpus(exp_dir / "corpus", cfg.seed, cfg.corpus);
    return hash_file(exp_dir / "corpus" / "manifest");
  });
}

StageOutcome run_featurize(const ExperimentConfig& cfg, const fs::path& exp_dir, bool force) {
  require_artifact(exp_dir / "corpus" / "manifest", "corpus manifest", "corpus-gen");
  nlohmann::json in = {{"n_mels", cfg.n_mels},
                       {"mfcc_ceps", cfg.mfcc_ceps},
                       {"mfcc_deltas", cfg.mfcc_deltas},
                       {"bpe_merges", cfg.bpe_merges},
                       {"upstream", upstream_hash(exp_dir, "corpus-gen")}};
  return run_stage(exp_dir, "featurize", hash_json(in), force, [&]() {
    corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");
    fs::create_directories(exp_dir / "features" / "fbank");
    fs::create_directories(exp_dir / "features" / "mfcc");

    // Pass 1: normalizer over the train-side splits.
    frontend::NormalizerFitter fitter;
    for (const auto& entry : manifest.entries) {
      if (entry.split == "test") continue;
      corpus::FrameArchive arc = corpus::read_frame_archive(exp_dir / "corpus" / entry.relpath);
      fitter.add(frontend::fbank(arc.frames, cfg.n_mels).frames);
    }
    frontend::Normalizer norm = fitter.finish();
    norm.save(exp_dir / "features" / "fbank_normalizer.bin");

    // Pass 2: normalized fbank and raw MFCC archives, alignments carried.
    std::vector<std::string> labeled_transcripts;
    for (const auto& entry : manifest.entries) {
      corpus::FrameArchive arc = corpus::read_frame_archive(exp_dir / "corpus" / entry.relpath);
      frontend::FeatureSequence fb = frontend::fbank(arc.frames, cfg.n_mels);
      frontend::FeatureSequence mf = frontend::mfcc(fb, cfg.mfcc_ceps, cfg.mfcc_deltas);
      frontend::apply_normalizer_inplace(norm, fb.frames);

      corpus::FrameArchive out;
      out.kind = corpus::FeatureKind::kFbank;
      out.frames = std::move(fb.frames);
      out.alignment = arc.alignment;
      out.transcript = arc.transcript;
      corpus::write_frame_archive(exp_dir / "features" / "fbank" / (entry.id + ".bin"), out);

      out.kind = corpus::FeatureKind::kMfcc;
      out.frames = std::move(mf.frames);
      corpus::write_frame_archive(exp_dir / "features" / "mfcc" / (entry.id + ".bin"), out);

      if (entry.split == "labeled" || entry.split == "finetune") {
        labeled_transcripts.push_back(arc.transcript);
      }
    }

    asr::BpeModel bpe = asr::BpeModel::train(labeled_transcripts, cfg.bpe_merges);
    bpe.save(exp_dir / "features" / "bpe.json");
    return hash_dir_files(exp_dir / "features", 0xcbf29ce484222325ull);
  });
}

StageOutcome run_train_supervised(const ExperimentConfig& cfg, const fs::path& exp_dir,
                                  const SupervisedOptions& options) {
  require_artifact(exp_dir / "features" / "bpe.json", "features", "featurize");
  nlohmann::json in = {{"encoder", cfg.encoder.to_json()},
                       {"decoder_layers", cfg.decoder_layers},
                       {"epochs", cfg.supervised_epochs},
                       {"batch", cfg.supervised_batch},
                       {"peak_lr", cfg.supervised_peak_lr},
                       {"warmup", cfg.supervised_warmup},
                       {"fraction", options.label_fraction},
                       {"tag", options.tag},
                       {"seed", cfg.seed},
                       {"upstream", upstream_hash(exp_dir, "featurize")}};
  return run_stage(exp_dir, options.tag, hash_json(in), options.force, [&]() {
    asr::BpeModel bpe = asr::BpeModel::load(exp_dir / "features" / "bpe.json");
    asr::LabeledData data = load_labeled_split(exp_dir, "labeled", options.label_fraction,
                                               cfg.seed ^ fnv1a64(options.tag));

    asr::AsrModel model(cfg.encoder, cfg.decoder_config(bpe.vocab_size()),
                        /*with_projection=*/false, RngStream(cfg.seed).fork("supervised_init"));
    model.specaugment = cfg.specaugment;

    const int64_t n = static_cast<int64_t>(data.ids.size());
    const int64_t spe = (n + cfg.supervised_batch - 1) / cfg.supervised_batch;
    asr::TrainOptions train;
    train.epochs = cfg.supervised_epochs;
    train.batch_size = cfg.supervised_batch;
    train.schedule = ad::LrSchedule::warmup_hold_halve(
        clamp_warmup(cfg.supervised_warmup, spe, cfg.decay_end_epoch), cfg.supervised_peak_lr,
        spe, cfg.decay_end_epoch);
    train.seed = cfg.seed;
    train.clip_norm = cfg.grad_clip;
    asr::TrainResult result =
        asr::train_asr(model, bpe, data, train, exp_dir / options.tag, "model", "supervised");
    return hash_file(result.checkpoint);
  });
}

StageOutcome run_extract_units(const ExperimentConfig& cfg, const fs::path& exp_dir,
                               const ExtractUnitsOptions& options) {
  require_artifact(exp_dir / "features" / "fbank_normalizer.bin", "features", "featurize");
  if (options.source != "seau" && options.source != "mfcc") {
    throw ConfigError("extract-units: source must be 'seau' or 'mfcc', got '" + options.source +
                      "'");
  }
  const std::string tag = options.tag.empty() ? options.source : options.tag;
  const int clusters = options.clusters > 0 ? options.clusters : cfg.clusters;
  fs::path checkpoint = options.checkpoint;
  if (options.source == "seau") {
    if (checkpoint.empty()) checkpoint = exp_dir / "supervised" / "model.bin";
    require_artifact(checkpoint, "supervised checkpoint", "train-supervised");
  }

  nlohmann::json in = {{"source", options.source},
                       {"layer", options.layer},
                       {"clusters", clusters},
                       {"tag", tag},
                       {"kmeans_max_iter", cfg.kmeans_max_iter},
                       {"kmeans_tol", cfg.kmeans_tol},
                       {"sample_cap", cfg.kmeans_sample_cap},
                       {"seed", cfg.seed},
                       {"checkpoint", options.source == "seau" ? hash_file(checkpoint) : 0},
                       {"upstream", upstream_hash(exp_dir, "featurize")}};
  return run_stage(exp_dir, "extract-units-" + tag, hash_json(in), options.force, [&]() {
    corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");
    quantizer::KmeansOptions kmeans;
    kmeans.max_iter = cfg.kmeans_max_iter;
    kmeans.tol = cfg.kmeans_tol;
    kmeans.seed = cfg.seed;
    kmeans.sample_cap = cfg.kmeans_sample_cap;

    quantizer::UnitExtraction extraction;
    if (options.source == "seau") {
      quantizer::SeauOptions seau;
      seau.layer_index = options.layer > 0 ? options.layer : cfg.seau_layer;
      seau.n_clusters = clusters;
      seau.kmeans = kmeans;
      extraction = quantizer::extract_seau_targets(checkpoint, exp_dir / "features" / "fbank",
                                                   manifest, "unlabeled", seau);
    } else {
      extraction = quantizer::extract_mfcc_targets(exp_dir / "features" / "mfcc", manifest,
                                                   "unlabeled", clusters, kmeans);
    }

    const fs::path out_dir = exp_dir / "units" / tag;
    fs::create_directories(out_dir);
    extraction.codebook.save(out_dir / "codebook.bin");
    extraction.normalizer.save(out_dir / "normalizer.bin");
    for (const auto& [id, units] : extraction.units) {
      quantizer::write_unit_file(out_dir / (id + ".units"), units, clusters);
    }

    // Unit quality against the ground-truth alignments, at the unit rate.
    std::vector<std::vector<uint16_t>> unit_seqs, phone_seqs;
    for (const auto& [id, units] : extraction.units) {
      corpus::FrameArchive arc =
          corpus::read_frame_archive(exp_dir / "features" / "fbank" / (id + ".bin"));
      unit_seqs.push_back(units);
      phone_seqs.push_back(
          quantizer::downsample_alignment(arc.alignment, static_cast<int64_t>(units.size())));
    }
    quantizer::UnitQualityReport quality = quantizer::unit_quality(unit_seqs, phone_seqs);
    nlohmann::json qj = {{"cluster_purity", quality.cluster_purity},
                         {"phone_purity", quality.phone_purity},
                         {"pnmi", quality.pnmi},
                         {"switch_rate", quality.switch_rate},
                         {"clusters", clusters},
                         {"source", options.source},
                         {"layer", extraction.codebook.layer_index}};
    write_file_atomic(out_dir / "quality.json", qj.dump(2));
    return hash_dir_files(out_dir, 0xcbf29ce484222325ull);
  });
}

StageOutcome run_pretrain(const ExperimentConfig& cfg, const fs::path& exp_dir,
                          const std::string& units_tag, bool force) {
  require_artifact(exp_dir / "units" / units_tag / "codebook.bin",
                   "unit files for '" + units_tag + "'", "extract-units --source " + units_tag);
  nlohmann::json in = {{"encoder", cfg.encoder.to_json()},
                       {"layerdrop", cfg.pretrain_layerdrop},
                       {"steps", cfg.pretrain_steps},
                       {"batch", cfg.pretrain_batch},
                       {"mask_prob", cfg.pretrain_mask_prob},
                       {"span_len", cfg.pretrain_span_len},
                       {"peak_lr", cfg.pretrain_peak_lr},
                       {"warmup", cfg.pretrain_warmup},
                       {"penalty", cfg.activation_penalty},
                       {"grad_scale", cfg.extractor_grad_scale},
                       {"seed", cfg.seed},
                       {"units", upstream_hash(exp_dir, "extract-units-" + units_tag)}};
  return run_stage(exp_dir, "pretrain-" + units_tag, hash_json(in), force, [&]() {
    pretrain::PretrainData data = load_pretrain_data(exp_dir, units_tag);
    nn::EncoderConfig enc = cfg.encoder;
    enc.layerdrop = cfg.pretrain_layerdrop;

    pretrain::PretrainConfig pc;
    pc.steps = cfg.pretrain_steps;
    pc.batch_size = cfg.pretrain_batch;
    pc.mask = pretrain::MaskSpec{cfg.pretrain_mask_prob, cfg.pretrain_span_len};
    pc.peak_lr = cfg.pretrain_peak_lr;
    pc.warmup_steps = std::min(cfg.pretrain_warmup, std::max<int64_t>(1, cfg.pretrain_steps / 4));
    pc.activation_penalty = cfg.activation_penalty;
    pc.extractor_grad_scale = static_cast<float>(cfg.extractor_grad_scale);
    pc.clip_norm = cfg.grad_clip;
    pc.seed = cfg.seed;
    pc.log_every = cfg.pretrain_log_every;
    pretrain::PretrainResult result =
        pretrain::pretrain_loop(enc, pc, data, exp_dir / "pretrain" / units_tag);
    return hash_file(result.checkpoint);
  });
}

StageOutcome run_finetune(const ExperimentConfig& cfg, const fs::path& exp_dir,
                          const FinetuneStageOptions& options) {
  require_artifact(exp_dir / "features" / "bpe.json", "features", "featurize");
  fs::path init_ckpt;
  if (options.init != "none") {
    init_ckpt = exp_dir / "pretrain" / options.init / "pretrain_final.bin";
    require_artifact(init_ckpt, "pre-trained checkpoint '" + options.init + "'",
                     "pretrain (after extract-units --source " + options.init + ")");
  }
  const std::string tag = "finetune-" + options.init;
  nlohmann::json in = {{"encoder", cfg.encoder.to_json()},
                       {"decoder_layers", cfg.decoder_layers},
                       {"epochs", cfg.finetune_epochs},
                       {"batch", cfg.finetune_batch},
                       {"peak_lr", cfg.finetune_peak_lr},
                       {"warmup", cfg.finetune_warmup},
                       {"freeze", cfg.freeze_extractor},
                       {"init", options.init},
                       {"init_hash", init_ckpt.empty() ? 0 : hash_file(init_ckpt)},
                       {"seed", cfg.seed},
                       {"upstream", upstream_hash(exp_dir, "featurize")}};
  return run_stage(exp_dir, tag, hash_json(in), options.force, [&]() {
    asr::BpeModel bpe = asr::BpeModel::load(exp_dir / "features" / "bpe.json");
    corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");
    asr::LabeledData data = load_labeled_split(exp_dir, labeled_train_split(manifest));

    asr::FinetuneOptions fopt;
    fopt.init_checkpoint = init_ckpt;
    // Freezing a random extractor would cripple the scratch baseline; the
    // freeze applies only to pre-trained initializations.
    fopt.freeze_extractor = cfg.freeze_extractor && options.init != "none";
    asr::AsrModel model =
        asr::build_finetune_model(cfg.encoder, cfg.decoder_config(bpe.vocab_size()), fopt,
                                  RngStream(cfg.seed).fork("finetune_init"));
    model.specaugment = cfg.specaugment;

    const int64_t n = static_cast<int64_t>(data.ids.size());
    const int64_t spe = (n + cfg.finetune_batch - 1) / cfg.finetune_batch;
    asr::TrainOptions train;
    train.epochs = cfg.finetune_epochs;
    train.batch_size = cfg.finetune_batch;
    train.schedule = ad::LrSchedule::warmup_hold_halve(
        clamp_warmup(cfg.finetune_warmup, spe, cfg.decay_end_epoch), cfg.finetune_peak_lr, spe,
        cfg.decay_end_epoch);
    train.seed = cfg.seed;
    train.clip_norm = cfg.grad_clip;
    train.freeze_extractor = fopt.freeze_extractor;
    asr::TrainResult result =
        asr::train_asr(model, bpe, data, train, exp_dir / tag, "model", "finetune");
    return hash_file(result.checkpoint);
  });
}

StageOutcome run_decode(const ExperimentConfig& cfg, const fs::path& exp_dir,
                        const std::string& model_tag, int beam, bool force) {
  const fs::path ckpt = exp_dir / model_tag / "model.bin";
  require_artifact(ckpt, "model checkpoint '" + model_tag + "'",
                   model_tag == "supervised" ? "train-supervised" : "finetune");
  require_artifact(exp_dir / "features" / "bpe.json", "features", "featurize");
  const int beam_width = beam > 0 ? beam : cfg.decode_beam;
  nlohmann::json in = {{"model", model_tag},
                       {"beam", beam_width},
                       {"ckpt", hash_file(ckpt)},
                       {"upstream", upstream_hash(exp_dir, "featurize")}};
  return run_stage(exp_dir, "decode-" + model_tag, hash_json(in), force, [&]() {
    asr::BpeModel bpe = asr::BpeModel::load(exp_dir / "features" / "bpe.json");
    asr::AsrModel model = asr::AsrModel::from_checkpoint(ad::Checkpoint::load(ckpt));
    corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");

    const fs::path out_dir = exp_dir / "decode" / model_tag;
    fs::create_directories(out_dir);
    std::ostringstream hyp;
    int truncated = 0;
    for (const corpus::ManifestEntry* e : manifest.split("test")) {
      corpus::FrameArchive arc =
          corpus::read_frame_archive(exp_dir / "features" / "fbank" / (e->id + ".bin"));
      asr::DecodeResult result = asr::decode_utterance(model, bpe, arc.frames, beam_width);
      hyp << e->id << '\t' << result.text << '\n';
      if (result.truncated) ++truncated;
    }
    write_file_atomic(out_dir / "hyp.tsv", hyp.str());
    nlohmann::json meta = {{"beam", beam_width}, {"truncated", truncated}};
    write_file_atomic(out_dir / "meta.json", meta.dump(2));
    return hash_file(out_dir / "hyp.tsv");
  });
}

StageOutcome run_score(const ExperimentConfig& cfg, const fs::path& exp_dir,
                       const std::string& model_tag, bool force) {
  (void)cfg;
  const fs::path hyp_path = exp_dir / "decode" / model_tag / "hyp.tsv";
  require_artifact(hyp_path, "hypotheses for '" + model_tag + "'", "decode");
  nlohmann::json in = {{"model", model_tag}, {"hyp", hash_file(hyp_path)}};
  return run_stage(exp_dir, "score-" + model_tag, hash_json(in), force, [&]() {
    corpus::CorpusManifest manifest = corpus::CorpusManifest::load(exp_dir / "corpus" / "manifest");
    std::map<std::string, std::string> hyps;
    std::istringstream in_hyp(read_text_file(hyp_path));
    std::string line;
    while (std::getline(in_hyp, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw IntegrityError("hyp.tsv: missing tab in '" + line + "'");
      hyps[line.substr(0, tab)] = line.substr(tab + 1);
    }

    int64_t substitutions = 0, deletions = 0, insertions = 0, n_ref = 0, n_utts = 0;
    for (const corpus::ManifestEntry* e : manifest.split("test")) {
      auto it = hyps.find(e->id);
      if (it == hyps.end()) throw DataError("score: no hypothesis for utterance " + e->id);
      corpus::FrameArchive arc =
          corpus::read_frame_archive(exp_dir / "features" / "fbank" / (e->id + ".bin"));
      asr::WerCounts counts = asr::wer(it->second, arc.transcript);
      substitutions += counts.substitutions;
      deletions += counts.deletions;
      insertions += counts.insertions;
      n_ref += counts.n_ref;
      ++n_utts;
    }
    const double rate =
        static_cast<double>(substitutions + deletions + insertions) / static_cast<double>(n_ref);
    nlohmann::json report = {{"wer", rate},
                             {"substitutions", substitutions},
                             {"deletions", deletions},
                             {"insertions", insertions},
                             {"n_ref_words", n_ref},
                             {"n_utts", n_utts}};
    const fs::path out_dir = exp_dir / "score" / model_tag;
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "report.json", report.dump(2));
    return hash_json(report);
  });
}

// ---- ablation ----

std::vector<AblationCell> run_ablation(const ExperimentConfig& cfg, const fs::path& exp_dir,
                                       const AblationOptions& options) {
  run_corpus_gen(cfg, exp_dir);
  run_featurize(cfg, exp_dir);

  // Out-of-domain analogue: a corpus with its own phone inventory and
  // lexicon, used only to train the supervised model behind the units.
  const fs::path out_exp = exp_dir / "outdomain";
  ExperimentConfig out_cfg = cfg;
  out_cfg.seed = options.out_domain_seed != 0
                     ? options.out_domain_seed
                     : RngStream(cfg.seed).fork("outdomain").next_u64();
  out_cfg.corpus.n_phones = cfg.corpus.n_phones + 1;
  out_cfg.corpus.n_unlabeled = 0;
  out_cfg.corpus.n_test = 0;
  const bool want_out =
      std::find(options.domains.begin(), options.domains.end(), "out") != options.domains.end();
  if (want_out) {
    run_corpus_gen(out_cfg, out_exp);
    run_featurize(out_cfg, out_exp);
  }

  std::vector<AblationCell> cells;
  for (const std::string& domain : options.domains) {
    for (double fraction : options.fractions) {
      for (int clusters : options.cluster_counts) {
        AblationCell cell;
        cell.domain = domain;
        cell.fraction = fraction;
        cell.clusters = clusters;
        nlohmann::json cell_cfg = {{"domain", domain},
                                   {"fraction", fraction},
                                   {"clusters", clusters},
                                   {"seed", cfg.seed},
                                   {"preset", cfg.preset}};
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(hash_json(cell_cfg)));
        cell.config_hash = hex;
        try {
          std::ostringstream frac_name;
          frac_name << "f" << static_cast<int>(std::lround(fraction * 100));
          const std::string sup_tag = "supervised-" + domain + "-" + frac_name.str();
          const std::string unit_tag =
              "abl-" + domain + "-" + frac_name.str() + "-c" + std::to_string(clusters);

          SupervisedOptions sup;
          sup.tag = sup_tag;
          sup.label_fraction = fraction;
          const fs::path sup_exp = domain == "out" ? out_exp : exp_dir;
          run_train_supervised(domain == "out" ? out_cfg : cfg, sup_exp, sup);

          ExtractUnitsOptions extract;
          extract.source = "seau";
          extract.clusters = clusters;
          extract.tag = unit_tag;
          extract.checkpoint = sup_exp / sup_tag / "model.bin";
          run_extract_units(cfg, exp_dir, extract);
          cell.pnmi = read_quality_report(exp_dir, unit_tag).pnmi;

          run_pretrain(cfg, exp_dir, unit_tag);
          FinetuneStageOptions ft;
          ft.init = unit_tag;
          run_finetune(cfg, exp_dir, ft);
          run_decode(cfg, exp_dir, "finetune-" + unit_tag);
          run_score(cfg, exp_dir, "finetune-" + unit_tag);
          cell.wer = read_score_report(exp_dir, "finetune-" + unit_tag).at("wer");
          cell.status = "ok";
        } catch (const std::exception& e) {
          cell.status = e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }

  // CSV + JSON report, one row per cell with its config hash.
  std::ostringstream csv;
  csv << "domain,fraction,clusters,pnmi,wer,status,config_hash\n";
  nlohmann::json jcells = nlohmann::json::array();
  for (const AblationCell& cell : cells) {
    std::string safe_status = cell.status;
    std::replace(safe_status.begin(), safe_status.end(), ',', ';');
    std::replace(safe_status.begin(), safe_status.end(), '\n', ' ');
    csv << cell.domain << ',' << cell.fraction << ',' << cell.clusters << ',' << cell.pnmi << ','
        << cell.wer << ',' << safe_status << ',' << cell.config_hash << '\n';
    jcells.push_back({{"domain", cell.domain},
                      {"fraction", cell.fraction},
                      {"clusters", cell.clusters},
                      {"pnmi", cell.pnmi},
                      {"wer", cell.wer},
                      {"status", cell.status},
                      {"config_hash", cell.config_hash}});
  }
  fs::create_directories(exp_dir / "ablation");
  write_file_atomic(exp_dir / "ablation" / "ablation.csv", csv.str());
  write_file_atomic(exp_dir / "ablation" / "ablation.json", jcells.dump(2));
  return cells;
}

}  // namespace seau::pipeline
