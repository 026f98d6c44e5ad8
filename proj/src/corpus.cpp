// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include "seau/binio.hpp"
#include "seau/error.hpp"

namespace seau::corpus {

namespace {

constexpr char kArchiveMagic[5] = {'S', 'E', 'A', 'U', '1'};
constexpr uint32_t kFormatVersion = 1;
constexpr char kInventoryMagic[7] = {'S', 'E', 'A', 'U', 'I', 'N', 'V'};

char phone_letter(int phone) { return static_cast<char>('a' + phone - 1); }

}  // namespace

const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kSignal: return "signal";
    case FeatureKind::kFbank: return "fbank";
    case FeatureKind::kMfcc: return "mfcc";
    case FeatureKind::kEncoder: return "encoder";
  }
  return "?";
}

void write_frame_archive(const std::filesystem::path& path, const FrameArchive& archive) {
  if (archive.alignment.size() != static_cast<size_t>(archive.frames.rows)) {
    throw ShapeError("frame archive " + path.string() + ": alignment length " +
                     std::to_string(archive.alignment.size()) + " != frames " +
                     std::to_string(archive.frames.rows));
  }
  ByteWriter w;
  w.bytes(kArchiveMagic, sizeof(kArchiveMagic));
  w.u32(kFormatVersion | (static_cast<uint32_t>(archive.kind) << 8));
  w.u32(static_cast<uint32_t>(archive.frames.rows));
  w.u32(static_cast<uint32_t>(archive.frames.cols));
  w.f32_array(archive.frames.data.data(), archive.frames.data.size());
  w.u16_array(archive.alignment.data(), archive.alignment.size());
  w.str(archive.transcript);
  write_file_atomic(path, w.data());
}

FrameArchive read_frame_archive(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[sizeof(kArchiveMagic)];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kArchiveMagic, sizeof(kArchiveMagic)) != 0) {
    throw IntegrityError(path.string() + ": bad magic");
  }
  uint32_t version = r.u32();
  if ((version & 0xff) != kFormatVersion) {
    throw IntegrityError(path.string() + ": unsupported format version " +
                         std::to_string(version & 0xff));
  }
  FrameArchive archive;
  archive.kind = static_cast<FeatureKind>((version >> 8) & 0xff);
  uint32_t t = r.u32();
  uint32_t d = r.u32();
  archive.frames.rows = t;
  archive.frames.cols = d;
  archive.frames.data = r.f32_array(static_cast<size_t>(t) * d);
  archive.alignment = r.u16_array(t);
  archive.transcript = r.str();
  if (!r.done()) {
    throw IntegrityError(path.string() + ": trailing bytes after transcript");
  }
  return archive;
}

PhoneInventory PhoneInventory::generate(int n_phones, int signal_dim, RngStream rng) {
  if (n_phones < 2) throw ConfigError("phone inventory needs at least 2 phones");
  if (signal_dim < 8) throw ConfigError("signal_dim must be >= 8");
  PhoneInventory inv;
  inv.n_phones = n_phones;
  inv.templates = FloatMatrix(n_phones, signal_dim);

  auto normalize = [&](float* v) {
    double ss = 0.0;
    for (int d = 0; d < signal_dim; ++d) ss += static_cast<double>(v[d]) * v[d];
    float inv_norm = static_cast<float>(1.0 / std::sqrt(ss));
    for (int d = 0; d < signal_dim; ++d) v[d] *= inv_norm;
  };
  auto cosine = [&](const float* a, const float* b) {
    double s = 0.0;
    for (int d = 0; d < signal_dim; ++d) s += static_cast<double>(a[d]) * b[d];
    return s;  // rows are unit norm
  };

  // Phone 0 is silence: a flat low-structure spectrum.
  {
    RngStream r = rng.fork("sil");
    float* row = inv.templates.row(0);
    for (int d = 0; d < signal_dim; ++d) row[d] = 1.0f + 0.05f * r.uniform_f32();
    normalize(row);
  }

  // Content phones: a handful of spectral bumps over a small floor, resampled
  // until sufficiently distinct from everything generated so far.
  for (int p = 1; p < n_phones; ++p) {
    for (int attempt = 0;; ++attempt) {
      RngStream r = rng.fork("phone").fork(static_cast<uint64_t>(p * 997 + attempt));
      float* row = inv.templates.row(p);
      for (int d = 0; d < signal_dim; ++d) row[d] = 0.02f;
      int n_bumps = static_cast<int>(r.uniform_int(3, 6));
      for (int b = 0; b < n_bumps; ++b) {
        double center = r.uniform(0.0, signal_dim - 1.0);
        double width = r.uniform(1.5, 3.5);
        double height = r.uniform(0.5, 1.0);
        for (int d = 0; d < signal_dim; ++d) {
          double z = (d - center) / width;
          row[d] += static_cast<float>(height * std::exp(-0.5 * z * z));
        }
      }
      normalize(row);
      bool distinct = true;
      for (int q = 0; q < p; ++q) {
        if (cosine(row, inv.templates.row(q)) >= 0.90) {
          distinct = false;
          break;
        }
      }
      if (distinct) break;
      if (attempt > 1000) throw ConfigError("cannot generate distinct phone templates");
    }
  }
  inv.validate();
  return inv;
}

void PhoneInventory::validate() const {
  for (int p = 0; p < n_phones; ++p) {
    double ss = 0.0;
    const float* row = templates.row(p);
    for (int64_t d = 0; d < templates.cols; ++d) {
      if (row[d] < 0.0f) throw DataError("phone template has a negative bin");
      ss += static_cast<double>(row[d]) * row[d];
    }
    if (std::abs(ss - 1.0) > 1e-4) throw DataError("phone template is not unit norm");
  }
  for (int p = 0; p < n_phones; ++p) {
    for (int q = p + 1; q < n_phones; ++q) {
      double s = 0.0;
      for (int64_t d = 0; d < templates.cols; ++d) {
        s += static_cast<double>(templates.at(p, d)) * templates.at(q, d);
      }
      if (s >= 0.95) {
        throw DataError("phones " + std::to_string(p) + " and " + std::to_string(q) +
                        " are too similar (cos " + std::to_string(s) + ")");
      }
    }
  }
}

uint64_t PhoneInventory::content_hash() const {
  return fnv1a64(templates.data.data(), templates.data.size() * sizeof(float));
}

void PhoneInventory::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes(kInventoryMagic, sizeof(kInventoryMagic));
  w.u32(1);
  w.u32(static_cast<uint32_t>(n_phones));
  w.u32(static_cast<uint32_t>(templates.cols));
  w.f32_array(templates.data.data(), templates.data.size());
  write_file_atomic(path, w.data());
}

PhoneInventory PhoneInventory::load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[sizeof(kInventoryMagic)];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kInventoryMagic, sizeof(kInventoryMagic)) != 0) {
    throw IntegrityError(path.string() + ": bad inventory magic");
  }
  if (r.u32() != 1) throw IntegrityError(path.string() + ": unsupported inventory version");
  PhoneInventory inv;
  inv.n_phones = static_cast<int>(r.u32());
  int64_t dim = r.u32();
  inv.templates.rows = inv.n_phones;
  inv.templates.cols = dim;
  inv.templates.data = r.f32_array(static_cast<size_t>(inv.n_phones) * dim);
  return inv;
}

Lexicon Lexicon::generate(int n_words, int n_phones, int min_len, int max_len, RngStream rng) {
  if (n_words < 1) throw ConfigError("lexicon must not be empty");
  if (n_phones < 2) throw ConfigError("need at least one content phone");
  Lexicon lex;
  std::set<std::vector<int>> seen;
  for (int w = 0; w < n_words; ++w) {
    for (int attempt = 0;; ++attempt) {
      RngStream r = rng.fork(static_cast<uint64_t>(w * 131 + attempt));
      int len = static_cast<int>(r.uniform_int(min_len, max_len + 1));
      std::vector<int> pron(len);
      for (int i = 0; i < len; ++i) {
        // Content phones only, no immediate repeats so runs stay decodable.
        int p;
        do {
          p = static_cast<int>(r.uniform_int(1, n_phones));
        } while (i > 0 && p == pron[i - 1]);
        pron[i] = p;
      }
      if (seen.insert(pron).second) {
        std::string word;
        for (int p : pron) word.push_back(phone_letter(p));
        lex.words.push_back(word);
        lex.prons.push_back(std::move(pron));
        break;
      }
      if (attempt > 5000) throw ConfigError("lexicon too large for phone inventory");
    }
  }
  return lex;
}

std::string Lexicon::decode_alignment(const std::vector<uint16_t>& alignment) const {
  // Collapse runs, then split the run sequence at silence.
  std::vector<int> runs;
  for (size_t t = 0; t < alignment.size(); ++t) {
    if (t == 0 || alignment[t] != alignment[t - 1]) runs.push_back(alignment[t]);
  }
  std::map<std::vector<int>, std::string> inverse;
  for (size_t i = 0; i < words.size(); ++i) inverse[prons[i]] = words[i];

  std::vector<std::string> out;
  std::vector<int> segment;
  auto flush = [&]() {
    if (segment.empty()) return;
    auto it = inverse.find(segment);
    if (it == inverse.end()) {
      std::string s;
      for (int p : segment) s += std::to_string(p) + " ";
      throw DataError("alignment segment [" + s + "] is not a lexicon word");
    }
    out.push_back(it->second);
    segment.clear();
  };
  for (int p : runs) {
    if (p == 0) {
      flush();
    } else {
      segment.push_back(p);
    }
  }
  flush();
  std::string text;
  for (size_t i = 0; i < out.size(); ++i) {
    if (i) text += ' ';
    text += out[i];
  }
  return text;
}

void Lexicon::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  for (size_t i = 0; i < words.size(); ++i) {
    os << words[i] << ':';
    for (size_t j = 0; j < prons[i].size(); ++j) {
      if (j) os << ',';
      os << prons[i][j];
    }
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  Lexicon lex;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) throw IntegrityError(path.string() + ": bad lexicon line");
    lex.words.push_back(line.substr(0, colon));
    std::vector<int> pron;
    std::istringstream ps(line.substr(colon + 1));
    std::string tok;
    while (std::getline(ps, tok, ',')) pron.push_back(std::stoi(tok));
    lex.prons.push_back(std::move(pron));
  }
  return lex;
}

void GeneratorConfig::validate() const {
  if (n_phones < 2) throw ConfigError("generator: n_phones must be >= 2");
  if (lexicon_size < 1) throw ConfigError("generator: lexicon must not be empty");
  if (signal_dim < 8) throw ConfigError("generator: signal_dim must be >= 8");
  if (dur_min < 1 || dur_max < dur_min) throw ConfigError("generator: bad duration range");
  if (word_min_phones < 1 || word_max_phones < word_min_phones) {
    throw ConfigError("generator: bad word length range");
  }
  if (total_utterances() < 1) throw ConfigError("generator: utterance count must be >= 1");
  if (target_frames < dur_max * (word_max_phones + 2)) {
    throw ConfigError("generator: target_frames too small for one word plus silence");
  }
}

Utterance render_utterance(const std::string& id, const PhoneInventory& inventory,
                           const Lexicon& lexicon, const GeneratorConfig& config, RngStream rng) {
  const int dim = config.signal_dim;
  RngStream text_rng = rng.fork("text");
  RngStream dur_rng = rng.fork("dur");
  RngStream chan_rng = rng.fork("channel");
  RngStream noise_rng = rng.fork("noise");

  auto draw_dur = [&]() {
    return static_cast<int>(dur_rng.uniform_int(config.dur_min, config.dur_max + 1));
  };

  // Word sequence with silence separators until the frame budget is reached.
  std::vector<uint16_t> alignment;
  std::vector<std::string> words;
  auto append_run = [&](int phone, int dur) {
    for (int i = 0; i < dur; ++i) alignment.push_back(static_cast<uint16_t>(phone));
  };
  append_run(0, draw_dur());
  while (static_cast<int>(alignment.size()) < config.target_frames) {
    size_t w = static_cast<size_t>(text_rng.uniform_int(0, static_cast<int64_t>(lexicon.words.size())));
    words.push_back(lexicon.words[w]);
    for (int phone : lexicon.prons[w]) append_run(phone, draw_dur());
    append_run(0, draw_dur());
  }

  Utterance utt;
  utt.id = id;
  utt.alignment = alignment;
  {
    std::string text;
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) text += ' ';
      text += words[i];
    }
    utt.transcript = text;
  }

  const int64_t n_frames = static_cast<int64_t>(alignment.size());
  utt.signal = FloatMatrix(n_frames, dim);

  // Per-utterance channel: gain and spectral tilt.
  float gain = static_cast<float>(std::exp(chan_rng.uniform(-config.gain_jitter, config.gain_jitter)));
  double tilt = chan_rng.uniform(-config.tilt_jitter, config.tilt_jitter);
  std::vector<float> tilt_vec(dim);
  for (int d = 0; d < dim; ++d) {
    tilt_vec[d] = static_cast<float>(std::exp(tilt * (static_cast<double>(d) / (dim - 1) - 0.5)));
  }

  double clean_power = 0.0;
  for (int64_t t = 0; t < n_frames; ++t) {
    const float* tmpl = inventory.templates.row(alignment[t]);
    float amp = static_cast<float>(std::exp(noise_rng.uniform(-config.amp_jitter, config.amp_jitter)));
    float* row = utt.signal.row(t);
    for (int d = 0; d < dim; ++d) {
      row[d] = tmpl[d] * gain * amp * tilt_vec[d];
      clean_power += static_cast<double>(row[d]) * row[d];
    }
  }

  if (std::isfinite(config.snr_db)) {
    double rms = std::sqrt(clean_power / static_cast<double>(n_frames * dim));
    float sigma = static_cast<float>(rms * std::pow(10.0, -config.snr_db / 20.0));
    for (int64_t t = 0; t < n_frames; ++t) {
      float* row = utt.signal.row(t);
      for (int d = 0; d < dim; ++d) {
        row[d] = std::max(0.0f, row[d] + sigma * noise_rng.normal_f32());
      }
    }
  }
  return utt;
}

std::vector<const ManifestEntry*> CorpusManifest::split(const std::string& name) const {
  if (!has_split(name)) {
    std::string known;
    for (const auto& s : split_names) known += (known.empty() ? "" : ", ") + s;
    throw NotFoundError("unknown split '" + name + "' (known: " + known + ")");
  }
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

bool CorpusManifest::has_split(const std::string& name) const {
  return std::find(split_names.begin(), split_names.end(), name) != split_names.end();
}

std::string CorpusManifest::serialize() const {
  std::ostringstream os;
  os << "manifest_version=1\n";
  os << "seed=" << seed << '\n';
  os << "n_phones=" << n_phones << '\n';
  os << "signal_dim=" << signal_dim << '\n';
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(inventory_hash));
  os << "inventory_hash=" << hex << '\n';
  os << "splits=";
  for (size_t i = 0; i < split_names.size(); ++i) {
    if (i) os << ',';
    os << split_names[i];
  }
  os << '\n';
  os << "n_utterances=" << entries.size() << '\n';
  for (const auto& e : entries) {
    os << "utt." << e.id << '=' << e.split << ',' << e.n_frames << ',' << e.relpath << '\n';
  }
  return os.str();
}

CorpusManifest CorpusManifest::parse(const std::string& text) {
  CorpusManifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw IntegrityError("manifest: bad line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "manifest_version") {
      if (val != "1") throw IntegrityError("manifest: unsupported version " + val);
    } else if (key == "seed") {
      m.seed = std::stoull(val);
    } else if (key == "n_phones") {
      m.n_phones = std::stoi(val);
    } else if (key == "signal_dim") {
      m.signal_dim = std::stoi(val);
    } else if (key == "inventory_hash") {
      m.inventory_hash = std::stoull(val, nullptr, 16);
    } else if (key == "splits") {
      std::istringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) m.split_names.push_back(tok);
    } else if (key == "n_utterances") {
      // count cross-checked below
    } else if (key.rfind("utt.", 0) == 0) {
      ManifestEntry e;
      e.id = key.substr(4);
      auto c1 = val.find(',');
      auto c2 = val.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos) {
        throw IntegrityError("manifest: bad utterance line '" + line + "'");
      }
      e.split = val.substr(0, c1);
      e.n_frames = std::stoll(val.substr(c1 + 1, c2 - c1 - 1));
      e.relpath = val.substr(c2 + 1);
      m.entries.push_back(std::move(e));
    } else {
      throw IntegrityError("manifest: unknown key '" + key + "'");
    }
  }
  return m;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

CorpusManifest generate_corpus(const std::filesystem::path& dir, uint64_t seed,
                               const GeneratorConfig& config) {
  config.validate();
  std::filesystem::create_directories(dir / "utts");

  RngStream root(seed);
  PhoneInventory inventory =
      PhoneInventory::generate(config.n_phones, config.signal_dim, root.fork("inventory"));
  Lexicon lexicon = Lexicon::generate(config.lexicon_size, config.n_phones,
                                      config.word_min_phones, config.word_max_phones,
                                      root.fork("lexicon"));
  inventory.save(dir / "inventory.bin");
  lexicon.save(dir / "lexicon.txt");

  CorpusManifest manifest;
  manifest.seed = seed;
  manifest.n_phones = config.n_phones;
  manifest.signal_dim = config.signal_dim;
  manifest.inventory_hash = inventory.content_hash();
  manifest.split_names = {"labeled", "unlabeled", "finetune", "test"};

  struct Block {
    const char* split;
    int count;
  };
  const Block blocks[] = {{"labeled", config.n_labeled},
                          {"unlabeled", config.n_unlabeled},
                          {"finetune", config.n_finetune},
                          {"test", config.n_test}};
  int index = 0;
  RngStream utt_root = root.fork("utts");
  for (const Block& block : blocks) {
    for (int i = 0; i < block.count; ++i, ++index) {
      char id[16];
      std::snprintf(id, sizeof(id), "u%06d", index);
      Utterance utt = render_utterance(id, inventory, lexicon, config,
                                       utt_root.fork(static_cast<uint64_t>(index)));
      ManifestEntry e;
      e.id = id;
      e.split = block.split;
      e.n_frames = utt.signal.rows;
      e.relpath = std::string("utts/") + id + ".bin";
      FrameArchive archive{utt.signal, FeatureKind::kSignal, utt.alignment, utt.transcript};
      write_frame_archive(dir / e.relpath, archive);
      manifest.entries.push_back(std::move(e));
    }
  }
  manifest.save(dir / "manifest");
  return manifest;
}

SplitReader::SplitReader(const std::filesystem::path& dir, const CorpusManifest& manifest,
                         const std::string& split)
    : dir_(dir) {
  for (const ManifestEntry* e : manifest.split(split)) entries_.push_back(*e);
}

std::optional<Utterance> SplitReader::next() {
  if (pos_ >= entries_.size()) return std::nullopt;
  const ManifestEntry& e = entries_[pos_++];
  FrameArchive archive;
  try {
    archive = read_frame_archive(dir_ / e.relpath);
  } catch (const IntegrityError& err) {
    throw IntegrityError("utterance " + e.id + ": " + err.what());
  }
  if (archive.frames.rows != e.n_frames) {
    throw IntegrityError("utterance " + e.id + ": manifest says " + std::to_string(e.n_frames) +
                         " frames, file has " + std::to_string(archive.frames.rows));
  }
  Utterance utt;
  utt.id = e.id;
  utt.signal = std::move(archive.frames);
  utt.alignment = std::move(archive.alignment);
  utt.transcript = std::move(archive.transcript);
  return utt;
}

}  // namespace seau::corpus
