// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <vector>

#include "seau/corpus.hpp"
#include "seau/matrix.hpp"

namespace seau::frontend {

using corpus::FeatureKind;

struct FeatureSequence {
  FloatMatrix frames;  // T x D
  FeatureKind kind = FeatureKind::kFbank;
  float frame_rate_hz = 100.0f;
};

// Mel-spaced triangular filterbank matrix (n_mels x in_bins).  Synthetic
// corpus frames are already spectral, so this is a linear projection, not an
// STFT pipeline.
FloatMatrix mel_filterbank_matrix(int in_bins, int n_mels);

// Log filterbank energies with floor 1e-10.  Input frames must be nonnegative.
FeatureSequence fbank(const FloatMatrix& signal_frames, int n_mels);
// Same, with a caller-supplied filterbank matrix (n_filters x in_bins).
FeatureSequence fbank_apply(const FloatMatrix& signal_frames, const FloatMatrix& filterbank);

// Orthonormal DCT-II matrix (n x n): M * M^T = I.
FloatMatrix dct_matrix(int n);

// First n_ceps DCT coefficients of the filterbank; with_deltas appends first
// and second order +/-2-frame regression deltas, tripling the dimension.
FeatureSequence mfcc(const FeatureSequence& fbank_features, int n_ceps, bool with_deltas);

struct Normalizer {
  std::vector<float> mean;
  std::vector<float> std;
  int clamped_dims = 0;  // dimensions whose std hit the epsilon floor

  void save(const std::filesystem::path& path) const;
  static Normalizer load(const std::filesystem::path& path);
};

// Streaming mean/std fitter (per dimension, double accumulators).
class NormalizerFitter {
 public:
  void add(const FloatMatrix& frames);
  Normalizer finish() const;

 private:
  int64_t dim_ = -1;
  int64_t count_ = 0;
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
};

FeatureSequence apply_normalizer(const Normalizer& norm, const FeatureSequence& features);
// In-place variant used on bulk frame matrices.
void apply_normalizer_inplace(const Normalizer& norm, FloatMatrix& frames);

}  // namespace seau::frontend
