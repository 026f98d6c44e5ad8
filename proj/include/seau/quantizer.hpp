// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "seau/corpus.hpp"
#include "seau/frontend.hpp"
#include "seau/matrix.hpp"

namespace seau::quantizer {

struct Codebook {
  FloatMatrix centroids;  // C x D
  corpus::FeatureKind kind = corpus::FeatureKind::kMfcc;
  int layer_index = -1;  // 1-based encoder block for encoder-layer features
  std::vector<float> inertia_history;

  int n_clusters() const { return static_cast<int>(centroids.rows); }
  void validate() const;
  void save(const std::filesystem::path& path) const;
  static Codebook load(const std::filesystem::path& path);
};

struct KmeansOptions {
  int max_iter = 50;
  double tol = 1e-4;  // stop when relative inertia improvement falls below
  uint64_t seed = 0;
  int64_t sample_cap = 2'000'000;  // uniform seeded subsample above this
};

// Seeded k-means++ then Lloyd iterations; empty clusters are re-seeded from
// the farthest point.  The recorded inertia history is non-increasing.
Codebook kmeans_fit(const FloatMatrix& frames, int n_clusters, const KmeansOptions& options);

// Nearest centroid by squared Euclidean distance; ties resolve to the lowest
// centroid index.
std::vector<uint16_t> assign_units(const Codebook& codebook, const FloatMatrix& frames);

// Phone label for each subsampled step: the phone at the step's receptive
// field center (4t, clamped).
std::vector<uint16_t> downsample_alignment(const std::vector<uint16_t>& alignment, int64_t t_sub);

struct UnitQualityReport {
  double cluster_purity = 0.0;
  double phone_purity = 0.0;
  double pnmi = 0.0;  // I(unit; phone) / H(phone)
  double switch_rate = 0.0;
};

// Aggregates a joint (unit, phone) contingency table over parallel sequences.
UnitQualityReport unit_quality(const std::vector<std::vector<uint16_t>>& units,
                               const std::vector<std::vector<uint16_t>>& phones);

// Unit files: magic, version, length, cluster count, u16 ids.
void write_unit_file(const std::filesystem::path& path, const std::vector<uint16_t>& units,
                     int n_clusters);
std::vector<uint16_t> read_unit_file(const std::filesystem::path& path, int* n_clusters = nullptr);

struct SeauOptions {
  int layer_index = -1;  // -1: round(0.75 * n_blocks)
  int n_clusters = 32;
  KmeansOptions kmeans;
};

struct UnitExtraction {
  Codebook codebook;
  frontend::Normalizer normalizer;
  // target-split unit sequences, in manifest order
  std::vector<std::pair<std::string, std::vector<uint16_t>>> units;
};

// The supervised-representation route: forwards normalized fbank features of
// `split` through the checkpoint's encoder in eval mode, clusters the chosen
// layer's hidden states, and assigns units to every utterance of the split.
UnitExtraction extract_seau_targets(const std::filesystem::path& checkpoint_path,
                                    const std::filesystem::path& fbank_dir,
                                    const corpus::CorpusManifest& manifest,
                                    const std::string& split, const SeauOptions& options);

// The hand-crafted-feature baseline route: clusters MFCC frames of `split`,
// assigns at frame rate, and reduces to the subsampled unit rate.
UnitExtraction extract_mfcc_targets(const std::filesystem::path& mfcc_dir,
                                    const corpus::CorpusManifest& manifest,
                                    const std::string& split, int n_clusters,
                                    const KmeansOptions& kmeans);

}  // namespace seau::quantizer
