// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <map>

#include "seau/asr.hpp"
#include "seau/binio.hpp"
#include "seau/error.hpp"

namespace seau::asr {

namespace {

std::vector<std::string> to_symbols(const std::string& text) {
  std::vector<std::string> symbols;
  symbols.reserve(text.size());
  for (char c : text) symbols.emplace_back(1, c);
  return symbols;
}

// Merge every left-to-right non-overlapping (a, b) occurrence.
void apply_one_merge(std::vector<std::string>& symbols, const std::string& a,
                     const std::string& b) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      out.push_back(a + b);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      ++i;
    }
  }
  symbols = std::move(out);
}

}  // namespace

BpeModel BpeModel::train(const std::vector<std::string>& transcripts, int n_merges) {
  bool any = false;
  for (const auto& t : transcripts) {
    if (!t.empty()) any = true;
  }
  if (!any) throw DataError("bpe: empty corpus");
  if (n_merges < 0) throw ConfigError("bpe: n_merges must be >= 0");

  std::vector<std::vector<std::string>> corpus;
  for (const auto& t : transcripts) {
    if (!t.empty()) corpus.push_back(to_symbols(t));
  }

  BpeModel model;
  std::map<std::string, int> base_symbols;
  for (const auto& sent : corpus) {
    for (const auto& s : sent) base_symbols.emplace(s, 0);
  }
  for (const auto& [sym, _] : base_symbols) {
    model.token_to_id_[sym] = static_cast<int>(model.id_to_token_.size()) + 4;
    model.id_to_token_.push_back(sym);
  }

  for (int m = 0; m < n_merges; ++m) {
    std::map<std::pair<std::string, std::string>, int64_t> counts;
    for (const auto& sent : corpus) {
      for (size_t i = 0; i + 1 < sent.size(); ++i) {
        ++counts[{sent[i], sent[i + 1]}];
      }
    }
    // Highest frequency; ties resolve to the lexicographically smallest pair
    // (std::map iteration order makes the first maximum the smallest).
    std::pair<std::string, std::string> best;
    int64_t best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count > best_count) {
        best_count = count;
        best = pair;
      }
    }
    if (best_count < 2) break;  // nothing left worth merging
    model.merges_.push_back(best);
    const std::string merged = best.first + best.second;
    if (!model.token_to_id_.count(merged)) {
      model.token_to_id_[merged] = static_cast<int>(model.id_to_token_.size()) + 4;
      model.id_to_token_.push_back(merged);
    }
    for (auto& sent : corpus) apply_one_merge(sent, best.first, best.second);
  }
  return model;
}

std::vector<std::string> BpeModel::apply_merges(const std::string& text) const {
  std::vector<std::string> symbols = to_symbols(text);
  for (const auto& [a, b] : merges_) apply_one_merge(symbols, a, b);
  return symbols;
}

std::vector<int> BpeModel::encode(const std::string& text) const {
  std::vector<int> ids;
  if (text.empty()) return ids;
  for (const auto& sym : apply_merges(text)) {
    auto it = token_to_id_.find(sym);
    ids.push_back(it == token_to_id_.end() ? kUnk : it->second);
  }
  return ids;
}

std::vector<int> BpeModel::encode_target(const std::string& text) const {
  std::vector<int> ids = encode(text);
  ids.insert(ids.begin(), kBos);
  ids.push_back(kEos);
  return ids;
}

std::string BpeModel::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 4) continue;
    const size_t index = static_cast<size_t>(id - 4);
    if (index >= id_to_token_.size()) {
      throw DataError("bpe: id " + std::to_string(id) + " out of vocab");
    }
    out += id_to_token_[index];
  }
  return out;
}

void BpeModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["tokens"] = id_to_token_;
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  j["merges"] = merges;
  write_file_atomic(path, j.dump(2));
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  BpeModel model;
  for (const auto& t : j.at("tokens")) {
    std::string token = t.get<std::string>();
    model.token_to_id_[token] = static_cast<int>(model.id_to_token_.size()) + 4;
    model.id_to_token_.push_back(token);
  }
  for (const auto& m : j.at("merges")) {
    model.merges_.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  }
  return model;
}

}  // namespace seau::asr
