// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "seau/asr.hpp"
#include "seau/binio.hpp"
#include "seau/corpus.hpp"
#include "seau/error.hpp"
#include "seau/frontend.hpp"
#include "seau/pretrain.hpp"
#include "test_util.hpp"

using namespace seau;
using namespace seau::asr;
using seau::testing::bits_equal;
namespace fs = std::filesystem;

// ---- BPE ----

TEST_CASE("bpe learns the most frequent pair first") {
  BpeModel model = BpeModel::train({"aaaa"}, 1);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0].first == "a");
  CHECK(model.merges()[0].second == "a");
  CHECK(model.encode("aaaa").size() == 2);
}

TEST_CASE("bpe with zero merges is a character tokenizer") {
  BpeModel model = BpeModel::train({"abc ab"}, 0);
  std::vector<int> ids = model.encode("abc ab");
  CHECK(ids.size() == 6);  // a b c ' ' a b
  CHECK(model.decode(ids) == "abc ab");
}

TEST_CASE("bpe encode/decode round-trips every training sentence") {
  RngStream rng(41);
  std::vector<std::string> corpus;
  const std::string alphabet = "abcde";
  for (int s = 0; s < 40; ++s) {
    std::string sentence;
    int words = static_cast<int>(rng.uniform_int(1, 6));
    for (int w = 0; w < words; ++w) {
      if (w) sentence += ' ';
      int len = static_cast<int>(rng.uniform_int(1, 6));
      for (int c = 0; c < len; ++c) {
        sentence += alphabet[static_cast<size_t>(rng.uniform_int(0, 5))];
      }
    }
    corpus.push_back(sentence);
  }
  for (int n_merges : {0, 5, 50}) {
    BpeModel model = BpeModel::train(corpus, n_merges);
    for (const auto& sentence : corpus) {
      CHECK(model.decode(model.encode(sentence)) == sentence);
    }
    // Deterministic encoding.
    CHECK(model.encode(corpus[0]) == model.encode(corpus[0]));
  }
}

TEST_CASE("bpe target encoding brackets with BOS/EOS and round-trips a save") {
  BpeModel model = BpeModel::train({"ab ba ab"}, 3);
  auto target = model.encode_target("ab");
  CHECK(target.front() == BpeModel::kBos);
  CHECK(target.back() == BpeModel::kEos);
  fs::path path = fs::temp_directory_path() / "seau_test_bpe.json";
  model.save(path);
  BpeModel loaded = BpeModel::load(path);
  CHECK(loaded.encode("ab ba") == model.encode("ab ba"));
  CHECK(loaded.vocab_size() == model.vocab_size());
  fs::remove(path);

  CHECK_THROWS_AS((void)BpeModel::train({}, 3), DataError);
  CHECK_THROWS_AS((void)BpeModel::train({""}, 3), DataError);
}

// ---- WER ----

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Exhaustive edit-script recursion (exponential-time oracle).
int edit_oracle(const std::vector<std::string>& r, const std::vector<std::string>& h, size_t i,
                size_t j) {
  if (i == r.size()) return static_cast<int>(h.size() - j);
  if (j == h.size()) return static_cast<int>(r.size() - i);
  int best = (r[i] == h[j] ? 0 : 1) + edit_oracle(r, h, i + 1, j + 1);
  best = std::min(best, 1 + edit_oracle(r, h, i + 1, j));
  best = std::min(best, 1 + edit_oracle(r, h, i, j + 1));
  return best;
}

}  // namespace

TEST_CASE("wer basics") {
  WerCounts same = wer("a b c", "a b c");
  CHECK(same.rate() == doctest::Approx(0.0));
  WerCounts sub = wer("a x c", "a b c");
  CHECK(sub.substitutions == 1);
  CHECK(sub.deletions == 0);
  CHECK(sub.insertions == 0);
  CHECK(sub.rate() == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS((void)wer("a", ""), DataError);
}

TEST_CASE("wer matches the brute-force edit oracle on random pairs") {
  RngStream rng(51);
  const std::vector<std::string> vocab = {"ka", "to", "mi", "su", "re"};
  for (int trial = 0; trial < 200; ++trial) {
    auto sample = [&](int max_words, bool allow_empty) {
      int n = static_cast<int>(rng.uniform_int(allow_empty ? 0 : 1, max_words + 1));
      std::string s;
      for (int i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += vocab[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(vocab.size())))];
      }
      return s;
    };
    std::string ref = sample(8, false);
    std::string hyp = sample(8, true);
    WerCounts counts = wer(hyp, ref);
    int oracle = edit_oracle(words_of(ref), words_of(hyp), 0, 0);
    CHECK(counts.substitutions + counts.deletions + counts.insertions == oracle);
    CHECK(counts.n_ref == static_cast<int64_t>(words_of(ref).size()));
  }
}

TEST_CASE("wer distance is symmetric with insertions and deletions swapped") {
  WerCounts ab = wer("a b x", "a c");
  WerCounts ba = wer("a c", "a b x");
  CHECK(ab.substitutions == ba.substitutions);
  CHECK(ab.insertions == ba.deletions);
  CHECK(ab.deletions == ba.insertions);
}

// ---- models and training ----

namespace {

struct TestSetup {
  fs::path dir;
  corpus::CorpusManifest manifest;
  frontend::Normalizer normalizer;
  BpeModel bpe = BpeModel::train({"x"}, 0);
  LabeledData labeled;

  nn::EncoderConfig enc_cfg;
  nn::DecoderConfig dec_cfg;
};

LabeledData load_split(const fs::path& dir, const corpus::CorpusManifest& manifest,
                       const std::string& split, const frontend::Normalizer& norm) {
  LabeledData data;
  corpus::SplitReader reader(dir, manifest, split);
  while (auto utt = reader.next()) {
    frontend::FeatureSequence fb = frontend::fbank(utt->signal, 20);
    frontend::apply_normalizer_inplace(norm, fb.frames);
    data.ids.push_back(utt->id);
    data.features.push_back(std::move(fb.frames));
    data.transcripts.push_back(utt->transcript);
  }
  return data;
}

TestSetup make_setup(int n_labeled, int n_test, uint64_t seed, const std::string& tag) {
  TestSetup setup;
  setup.dir = fs::temp_directory_path() / ("seau_test_asr_" + tag);
  fs::remove_all(setup.dir);

  corpus::GeneratorConfig cfg;
  cfg.n_phones = 4;
  cfg.signal_dim = 32;
  cfg.lexicon_size = 6;
  cfg.word_min_phones = 1;
  cfg.word_max_phones = 2;
  cfg.target_frames = 40;
  cfg.dur_min = 3;
  cfg.dur_max = 6;
  cfg.snr_db = 20.0;
  cfg.gain_jitter = 0.1;
  cfg.tilt_jitter = 0.1;
  cfg.amp_jitter = 0.05;
  cfg.n_labeled = n_labeled;
  cfg.n_unlabeled = 0;
  cfg.n_finetune = 0;
  cfg.n_test = n_test;
  setup.manifest = corpus::generate_corpus(setup.dir, seed, cfg);

  frontend::NormalizerFitter fitter;
  corpus::SplitReader reader(setup.dir, setup.manifest, "labeled");
  while (auto utt = reader.next()) {
    fitter.add(frontend::fbank(utt->signal, 20).frames);
  }
  setup.normalizer = fitter.finish();
  setup.labeled = load_split(setup.dir, setup.manifest, "labeled", setup.normalizer);

  std::vector<std::string> transcripts = setup.labeled.transcripts;
  setup.bpe = BpeModel::train(transcripts, 10);

  setup.enc_cfg.n_blocks = 2;
  setup.enc_cfg.model_dim = 32;
  setup.enc_cfg.ffn_dim = 48;
  setup.enc_cfg.n_heads = 4;
  setup.enc_cfg.conv_kernel = 3;
  setup.enc_cfg.dropout = 0.05f;
  setup.enc_cfg.layerdrop = 0.0f;
  setup.enc_cfg.projection_dim = 24;
  setup.enc_cfg.input_dim = 20;
  setup.enc_cfg.extractor_channels = 4;
  setup.dec_cfg.n_layers = 2;
  setup.dec_cfg.model_dim = 32;
  setup.dec_cfg.ffn_dim = 48;
  setup.dec_cfg.n_heads = 4;
  setup.dec_cfg.vocab_size = setup.bpe.vocab_size();
  setup.dec_cfg.dropout = 0.05f;
  return setup;
}

TrainOptions quick_options(int epochs, uint64_t seed, int64_t total_steps_hint) {
  TrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = 4;
  opt.schedule = ad::LrSchedule::warmup_linear_decay(10, 3e-3, total_steps_hint);
  opt.seed = seed;
  opt.log_every = 0;
  return opt;
}

}  // namespace

TEST_CASE("supervised training starts near ln(vocab) and halves its loss") {
  TestSetup setup = make_setup(50, 0, 61, "sup");
  AsrModel model(setup.enc_cfg, setup.dec_cfg, /*with_projection=*/false, RngStream(1));
  model.specaugment = nn::SpecAugmentConfig{4, 8, 1, 1};

  const int64_t spe = (50 + 3) / 4;
  TrainOptions opt = quick_options(15, 7, 15 * spe + 1);
  TrainResult result = train_asr(model, setup.bpe, setup.labeled, opt, setup.dir / "sup",
                                 "supervised", "supervised");

  const double uniform = std::log(static_cast<double>(setup.bpe.vocab_size()));
  CHECK(result.initial_loss == doctest::Approx(uniform).epsilon(0.15));
  CHECK(result.final_loss < 0.5 * result.initial_loss);
  CHECK(result.skipped_empty == 0);
  CHECK(fs::exists(result.checkpoint));
  fs::remove_all(setup.dir);
}

TEST_CASE("specaugment changes the training trajectory but not eval forwards") {
  TestSetup setup = make_setup(12, 0, 62, "spec");
  auto run = [&](bool use_spec) {
    AsrModel model(setup.enc_cfg, setup.dec_cfg, false, RngStream(2));
    model.use_specaugment = use_spec;
    model.specaugment = nn::SpecAugmentConfig{4, 8, 1, 1};
    TrainOptions opt = quick_options(2, 9, 100);
    TrainResult r = train_asr(model, setup.bpe, setup.labeled, opt,
                              setup.dir / (use_spec ? "with" : "without"), "m", "supervised");
    return read_file(r.checkpoint);
  };
  auto with = run(true);
  auto without = run(false);
  CHECK(with != without);

  // Eval-mode encoding of a fixed checkpoint ignores the specaugment flag.
  AsrModel model = AsrModel::from_checkpoint(ad::Checkpoint::load(setup.dir / "with" / "m.bin"));
  ad::Tensor a = model.encode(setup.labeled.features[0], false, RngStream(3));
  model.use_specaugment = false;
  ad::Tensor b = model.encode(setup.labeled.features[0], false, RngStream(4));
  CHECK(bits_equal(a.values(), b.values()));
  fs::remove_all(setup.dir);
}

TEST_CASE("empty transcripts are skipped with a count") {
  TestSetup setup = make_setup(8, 0, 63, "skip");
  setup.labeled.transcripts[2] = "";
  setup.labeled.transcripts[5] = "";
  AsrModel model(setup.enc_cfg, setup.dec_cfg, false, RngStream(4));
  TrainOptions opt = quick_options(1, 3, 100);
  TrainResult r =
      train_asr(model, setup.bpe, setup.labeled, opt, setup.dir / "skip", "m", "supervised");
  CHECK(r.skipped_empty == 2);
  fs::remove_all(setup.dir);
}

TEST_CASE("finetuning from a pretrained checkpoint freezes the extractor bitwise") {
  TestSetup setup = make_setup(10, 0, 64, "ft");

  // A tiny masked-prediction run provides the init checkpoint.
  pretrain::PretrainData pdata;
  pdata.n_units = 4;
  for (size_t i = 0; i < setup.labeled.features.size(); ++i) {
    const auto& f = setup.labeled.features[i];
    pdata.features.push_back(f);
    pdata.units.push_back(std::vector<uint16_t>(
        static_cast<size_t>(nn::subsampled_length(f.rows)), static_cast<uint16_t>(i % 4)));
  }
  pretrain::PretrainConfig pcfg;
  pcfg.steps = 12;
  pcfg.batch_size = 2;
  pcfg.mask = pretrain::MaskSpec{0.3, 2};
  pcfg.warmup_steps = 4;
  pcfg.peak_lr = 1e-3;
  pcfg.seed = 11;
  pcfg.log_every = 0;
  auto pres = pretrain::pretrain_loop(setup.enc_cfg, pcfg, pdata, setup.dir / "pre");

  FinetuneOptions fopt;
  fopt.init_checkpoint = pres.checkpoint;
  fopt.freeze_extractor = true;
  AsrModel model = build_finetune_model(setup.enc_cfg, setup.dec_cfg, fopt, RngStream(5));
  CHECK(model.projection.has_value());

  // Extractor tensors start equal to the pretrained ones...
  ad::Checkpoint pre = ad::Checkpoint::load(pres.checkpoint);
  for (const ad::Tensor& t : model.encoder.extractor_group().params) {
    const ad::NamedTensor* src = pre.find(t.name());
    REQUIRE(src != nullptr);
    CHECK(bits_equal(t.values(), src->values));
  }

  TrainOptions opt = quick_options(2, 13, 100);
  opt.freeze_extractor = true;
  train_asr(model, setup.bpe, setup.labeled, opt, setup.dir / "ft", "finetune", "finetune");

  // ...and stay bit-identical through fine-tuning, while blocks moved.
  bool blocks_moved = false;
  for (const ad::Tensor& t : model.encoder.extractor_group().params) {
    const ad::NamedTensor* src = pre.find(t.name());
    CHECK(bits_equal(t.values(), src->values));
  }
  for (const ad::Tensor& t : model.encoder.block_group().params) {
    const ad::NamedTensor* src = pre.find(t.name());
    REQUIRE(src != nullptr);
    if (!bits_equal(t.values(), src->values)) blocks_moved = true;
  }
  CHECK(blocks_moved);
  fs::remove_all(setup.dir);
}

TEST_CASE("checkpoints of a different architecture are rejected with tensor names") {
  TestSetup setup = make_setup(6, 0, 65, "mismatch");
  AsrModel model(setup.enc_cfg, setup.dec_cfg, false, RngStream(6));
  ad::Checkpoint ckpt = model.to_checkpoint("supervised");

  nn::EncoderConfig bigger = setup.enc_cfg;
  bigger.model_dim = 64;
  bigger.ffn_dim = 96;
  bigger.projection_dim = 48;
  FinetuneOptions fopt;
  fopt.init_checkpoint = setup.dir / "sup.bin";
  ckpt.save(fopt.init_checkpoint);
  try {
    (void)build_finetune_model(bigger, nn::DecoderConfig::toy(setup.bpe.vocab_size()), fopt,
                               RngStream(7));
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("encoder.block0") != std::string::npos);
  }
  fs::remove_all(setup.dir);
}

TEST_CASE("a model overfitted to five utterances decodes them exactly") {
  TestSetup setup = make_setup(5, 0, 66, "overfit");
  AsrModel model(setup.enc_cfg, setup.dec_cfg, false, RngStream(8));
  model.use_specaugment = false;  // memorization run

  TrainOptions opt;
  opt.epochs = 150;  // 2 steps per epoch
  opt.batch_size = 4;
  opt.schedule = ad::LrSchedule::warmup_linear_decay(20, 3e-3, 310);
  opt.seed = 17;
  opt.log_every = 0;
  TrainResult r =
      train_asr(model, setup.bpe, setup.labeled, opt, setup.dir / "overfit", "m", "supervised");
  CHECK(r.final_loss < 0.1);

  int exact = 0;
  for (size_t i = 0; i < setup.labeled.features.size(); ++i) {
    DecodeResult hyp = decode_utterance(model, setup.bpe, setup.labeled.features[i], 1);
    if (hyp.text == setup.labeled.transcripts[i]) ++exact;
  }
  CHECK(exact == 5);

  // Greedy decoding is deterministic.
  DecodeResult a = decode_utterance(model, setup.bpe, setup.labeled.features[0], 1);
  DecodeResult b = decode_utterance(model, setup.bpe, setup.labeled.features[0], 1);
  CHECK(a.text == b.text);
  CHECK(a.score == b.score);

  // Wider beams never score worse under the shared normalization.
  for (size_t i = 0; i < setup.labeled.features.size(); ++i) {
    DecodeResult g = decode_utterance(model, setup.bpe, setup.labeled.features[i], 1);
    DecodeResult w = decode_utterance(model, setup.bpe, setup.labeled.features[i], 4);
    CHECK(w.score >= g.score - 1e-12);
  }

  FloatMatrix empty(0, 20);
  CHECK_THROWS_AS((void)decode_utterance(model, setup.bpe, empty, 1), DataError);
  CHECK_THROWS_AS((void)decode_utterance(model, setup.bpe, setup.labeled.features[0], 0),
                  ConfigError);
  fs::remove_all(setup.dir);
}

TEST_CASE("teacher-forced eval loss is a pure function of checkpoint and batch") {
  TestSetup setup = make_setup(4, 0, 67, "pure");
  AsrModel model(setup.enc_cfg, setup.dec_cfg, false, RngStream(9));
  std::vector<int> tokens = setup.bpe.encode_target(setup.labeled.transcripts[0]);
  std::vector<int> input(tokens.begin(), tokens.end() - 1);
  std::vector<int> target(tokens.begin() + 1, tokens.end());
  std::vector<uint8_t> mask(target.size(), 1);
  auto loss = [&]() {
    ad::Tensor enc = model.encode(setup.labeled.features[0], false, RngStream(1));
    ad::Tensor logits = model.decoder.forward(enc, input, false, RngStream(2));
    return ad::cross_entropy(logits, target, mask).scalar();
  };
  CHECK(loss() == loss());
  fs::remove_all(setup.dir);
}
