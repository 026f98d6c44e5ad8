// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "seau/binio.hpp"
#include "seau/corpus.hpp"
#include "seau/error.hpp"

using namespace seau;
using namespace seau::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("seau_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.n_phones = 5;
  cfg.signal_dim = 32;
  cfg.lexicon_size = 10;
  cfg.target_frames = 120;
  cfg.n_labeled = 4;
  cfg.n_unlabeled = 10;
  cfg.n_finetune = 0;
  cfg.n_test = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generate_corpus is deterministic and invariant-clean") {
  auto dir_a = temp_dir("corpus_a");
  auto dir_b = temp_dir("corpus_b");
  GeneratorConfig cfg = small_config();
  CorpusManifest ma = generate_corpus(dir_a, 7, cfg);
  CorpusManifest mb = generate_corpus(dir_b, 7, cfg);

  CHECK(ma.entries.size() == 19);
  CHECK(ma.serialize() == mb.serialize());

  // Byte-identical utterance files.
  for (const auto& e : ma.entries) {
    auto a = read_file(dir_a / e.relpath);
    auto b = read_file(dir_b / e.relpath);
    CHECK(a == b);
  }

  // Different seed changes content.
  auto dir_c = temp_dir("corpus_c");
  CorpusManifest mc = generate_corpus(dir_c, 8, cfg);
  CHECK(mc.serialize() != ma.serialize());
}

TEST_CASE("splits are disjoint and cover all utterances") {
  auto dir = temp_dir("corpus_splits");
  GeneratorConfig cfg = small_config();
  cfg.n_finetune = 3;
  CorpusManifest m = generate_corpus(dir, 11, cfg);

  std::set<std::string> seen;
  size_t total = 0;
  for (const auto& split : m.split_names) {
    for (const ManifestEntry* e : m.split(split)) {
      CHECK(seen.insert(e->id).second);
      ++total;
    }
  }
  CHECK(total == m.entries.size());
  CHECK(m.split("labeled").size() == 4);
  CHECK(m.split("finetune").size() == 3);
  CHECK(m.split("test").size() == 5);
}

TEST_CASE("alignment decodes to the transcript and durations respect dur_min") {
  auto dir = temp_dir("corpus_decode");
  GeneratorConfig cfg = small_config();
  CorpusManifest m = generate_corpus(dir, 3, cfg);
  Lexicon lex = Lexicon::load(dir / "lexicon.txt");

  SplitReader reader(dir, m, "unlabeled");
  size_t n = 0;
  while (auto utt = reader.next()) {
    ++n;
    CHECK(utt->alignment.size() == static_cast<size_t>(utt->signal.rows));
    CHECK(lex.decode_alignment(utt->alignment) == utt->transcript);
    // Runs no shorter than dur_min.
    size_t run = 1;
    for (size_t t = 1; t <= utt->alignment.size(); ++t) {
      if (t < utt->alignment.size() && utt->alignment[t] == utt->alignment[t - 1]) {
        ++run;
      } else {
        CHECK(run >= static_cast<size_t>(cfg.dur_min));
        run = 1;
      }
    }
    for (float v : utt->signal.data) CHECK(v >= 0.0f);
  }
  CHECK(n == 10);
}

TEST_CASE("noise-free single-word corpus reproduces templates exactly") {
  auto dir = temp_dir("corpus_clean");
  GeneratorConfig cfg = small_config();
  cfg.n_phones = 2;
  cfg.lexicon_size = 1;
  cfg.word_min_phones = 1;
  cfg.word_max_phones = 1;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.gain_jitter = 0.0;
  cfg.tilt_jitter = 0.0;
  cfg.amp_jitter = 0.0;
  cfg.n_labeled = 0;
  cfg.n_unlabeled = 2;
  cfg.n_test = 0;
  CorpusManifest m = generate_corpus(dir, 5, cfg);
  PhoneInventory inv = PhoneInventory::load(dir / "inventory.bin");

  SplitReader reader(dir, m, "unlabeled");
  while (auto utt = reader.next()) {
    for (int64_t t = 0; t < utt->signal.rows; ++t) {
      const float* tmpl = inv.templates.row(utt->alignment[static_cast<size_t>(t)]);
      for (int64_t d = 0; d < utt->signal.cols; ++d) {
        CHECK(utt->signal.at(t, d) == tmpl[d]);
      }
    }
  }
}

TEST_CASE("phone templates are unit-norm and distinct") {
  PhoneInventory inv = PhoneInventory::generate(8, 64, RngStream(123));
  inv.validate();  // throws on violation
  for (int p = 0; p < inv.n_phones; ++p) {
    for (int q = p + 1; q < inv.n_phones; ++q) {
      double cos = 0.0;
      for (int64_t d = 0; d < inv.templates.cols; ++d) {
        cos += static_cast<double>(inv.templates.at(p, d)) * inv.templates.at(q, d);
      }
      CHECK(cos < 0.95);
    }
  }
}

TEST_CASE("invalid generator configs are rejected") {
  GeneratorConfig cfg = small_config();
  cfg.n_phones = 1;
  CHECK_THROWS_AS((void)cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.lexicon_size = 0;
  CHECK_THROWS_AS((void)cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.n_labeled = cfg.n_unlabeled = cfg.n_finetune = cfg.n_test = 0;
  CHECK_THROWS_AS((void)cfg.validate(), ConfigError);
}

TEST_CASE("unknown split and corrupt file are reported") {
  auto dir = temp_dir("corpus_err");
  GeneratorConfig cfg = small_config();
  CorpusManifest m = generate_corpus(dir, 9, cfg);

  CHECK_THROWS_AS((void)SplitReader(dir, m, "dev2"), NotFoundError);
  CHECK_THROWS_WITH_AS((void)SplitReader(dir, m, "dev2"),
                       doctest::Contains("dev2"), NotFoundError);

  // Truncate one utterance file.
  const auto& victim = m.entries.front();
  auto bytes = read_file(dir / victim.relpath);
  bytes.resize(bytes.size() / 2);
  write_file_atomic(dir / victim.relpath, bytes);
  SplitReader reader(dir, m, victim.split);
  try {
    while (reader.next()) {
    }
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find(victim.id) != std::string::npos);
  }
}

TEST_CASE("frame archive round-trips all feature kinds") {
  auto dir = temp_dir("corpus_archive");
  FrameArchive a;
  a.frames = FloatMatrix(3, 4);
  for (int64_t i = 0; i < a.frames.numel(); ++i) a.frames.data[static_cast<size_t>(i)] = 0.5f * i;
  a.alignment = {1, 1, 2};
  a.transcript = "ab ba";
  a.kind = FeatureKind::kMfcc;
  write_frame_archive(dir / "x.bin", a);
  FrameArchive b = read_frame_archive(dir / "x.bin");
  CHECK(b.kind == FeatureKind::kMfcc);
  CHECK(b.frames.rows == 3);
  CHECK(b.frames.cols == 4);
  CHECK(b.frames.data == a.frames.data);
  CHECK(b.alignment == a.alignment);
  CHECK(b.transcript == a.transcript);
}
