// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include <sstream>
#include <vector>

#include "seau/asr.hpp"
#include "seau/error.hpp"

namespace seau::asr {

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

}  // namespace

double WerCounts::rate() const {
  return static_cast<double>(substitutions + deletions + insertions) / static_cast<double>(n_ref);
}

WerCounts wer(const std::string& hyp, const std::string& ref) {
  const std::vector<std::string> h = split_words(hyp);
  const std::vector<std::string> r = split_words(ref);
  if (r.empty()) throw DataError("wer: empty reference has no defined rate");

  const size_t n = r.size(), m = h.size();
  // cost[i][j]: edit distance between ref[0..i) and hyp[0..j).
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int sub = cost[i - 1][j - 1] + (r[i - 1] == h[j - 1] ? 0 : 1);
      const int del = cost[i - 1][j] + 1;  // ref word missing from hyp
      const int ins = cost[i][j - 1] + 1;  // extra hyp word
      cost[i][j] = std::min({sub, del, ins});
    }
  }

  // Backtrack one optimal path to split the distance into S/D/I.
  WerCounts counts;
  counts.n_ref = static_cast<int64_t>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[i][j] == cost[i - 1][j - 1] + (r[i - 1] == h[j - 1] ? 0 : 1)) {
      if (r[i - 1] != h[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

}  // namespace seau::asr
