// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seau/matrix.hpp"
#include "seau/rng.hpp"

namespace seau::corpus {

// Feature kind recorded in the version field of every frame-archive file.
enum class FeatureKind : uint8_t {
  kSignal = 0,   // synthetic spectral frames as generated
  kFbank = 1,    // log Mel-style filterbank
  kMfcc = 2,     // cepstra (+ optional deltas)
  kEncoder = 3,  // encoder-layer representations (subsampled rate)
};

const char* feature_kind_name(FeatureKind kind);

// One frame archive on disk: magic "SEAU1", version/kind, T, D (u32 LE),
// then T*D f32 LE row-major, T u16 LE alignment, length-prefixed transcript.
struct FrameArchive {
  FloatMatrix frames;
  FeatureKind kind = FeatureKind::kSignal;
  std::vector<uint16_t> alignment;  // per-frame phone id
  std::string transcript;
};

void write_frame_archive(const std::filesystem::path& path, const FrameArchive& archive);
FrameArchive read_frame_archive(const std::filesystem::path& path);

// Synthetic phone inventory.  Phone 0 is the between-word silence phone; all
// templates are positive with unit L2 norm and pairwise cosine < 0.95.
struct PhoneInventory {
  int n_phones = 0;
  FloatMatrix templates;  // n_phones x signal_dim

  static PhoneInventory generate(int n_phones, int signal_dim, RngStream rng);
  void validate() const;
  uint64_t content_hash() const;

  void save(const std::filesystem::path& path) const;
  static PhoneInventory load(const std::filesystem::path& path);
};

// Word list with unique pronunciations over content phones (ids >= 1).  Word
// strings spell their pronunciation (phone 1 -> 'a', 2 -> 'b', ...), so the
// transcript is recoverable from the frame alignment by construction.
struct Lexicon {
  std::vector<std::string> words;
  std::vector<std::vector<int>> prons;

  static Lexicon generate(int n_words, int n_phones, int min_len, int max_len, RngStream rng);
  // Collapse an alignment into runs, split at silence, and map segments back
  // to words.  Throws DataError if a segment is not in the lexicon.
  std::string decode_alignment(const std::vector<uint16_t>& alignment) const;

  void save(const std::filesystem::path& path) const;
  static Lexicon load(const std::filesystem::path& path);
};

struct Utterance {
  std::string id;
  FloatMatrix signal;  // T_sig x signal_dim, nonnegative
  std::string transcript;
  std::vector<uint16_t> alignment;
};

struct GeneratorConfig {
  int n_phones = 6;  // including silence
  int signal_dim = 64;
  int lexicon_size = 12;
  int word_min_phones = 2;
  int word_max_phones = 4;
  int dur_min = 3;
  int dur_max = 10;
  int target_frames = 300;
  // Corruption model: per-utterance gain and spectral tilt, per-frame
  // amplitude jitter (all log-uniform), additive noise at snr_db.  An
  // infinite snr_db disables noise entirely.
  double snr_db = 10.0;
  double gain_jitter = 0.6;
  double tilt_jitter = 0.8;
  double amp_jitter = 0.15;
  int n_labeled = 400;
  int n_unlabeled = 2000;
  int n_finetune = 0;
  int n_test = 200;

  void validate() const;
  int total_utterances() const { return n_labeled + n_unlabeled + n_finetune + n_test; }
};

struct ManifestEntry {
  std::string id;
  std::string split;
  int64_t n_frames = 0;
  std::string relpath;
};

struct CorpusManifest {
  uint64_t seed = 0;
  int n_phones = 0;
  int signal_dim = 0;
  uint64_t inventory_hash = 0;
  std::vector<std::string> split_names;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
  bool has_split(const std::string& name) const;

  std::string serialize() const;
  static CorpusManifest parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

// Renders the whole corpus under `dir` (manifest, inventory.bin, lexicon.txt,
// utts/*.bin).  Deterministic: the same (seed, config) reproduces every byte.
CorpusManifest generate_corpus(const std::filesystem::path& dir, uint64_t seed,
                               const GeneratorConfig& config);

// Streaming reader over one split, in manifest order.
class SplitReader {
 public:
  SplitReader(const std::filesystem::path& dir, const CorpusManifest& manifest,
              const std::string& split);
  std::optional<Utterance> next();
  size_t size() const { return entries_.size(); }
  void reset() { pos_ = 0; }

 private:
  std::filesystem::path dir_;
  std::vector<ManifestEntry> entries_;
  size_t pos_ = 0;
};

// Renders a single utterance (exposed for tests; generate_corpus uses it).
Utterance render_utterance(const std::string& id, const PhoneInventory& inventory,
                           const Lexicon& lexicon, const GeneratorConfig& config, RngStream rng);

}  // namespace seau::corpus
