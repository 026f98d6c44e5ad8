// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "seau/error.hpp"
#include "seau/frontend.hpp"
#include "seau/rng.hpp"

using namespace seau;
using namespace seau::frontend;

TEST_CASE("fbank floors all-zero frames at log(1e-10)") {
  FloatMatrix zero(2, 16);
  FeatureSequence out = fbank(zero, 8);
  const float floor = static_cast<float>(std::log(1e-10));
  for (float v : out.frames.data) {
    CHECK(v == floor);
  }
}

TEST_CASE("unit filter over a frame summing to one yields log(1) = 0") {
  FloatMatrix frame(1, 8);
  for (int d = 0; d < 8; ++d) frame.at(0, d) = 0.125f;
  FloatMatrix ones(1, 8);
  for (int d = 0; d < 8; ++d) ones.at(0, d) = 1.0f;
  FeatureSequence out = fbank_apply(frame, ones);
  CHECK(out.frames.at(0, 0) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("fbank matches a double-precision matmul-then-log oracle") {
  RngStream rng(17);
  const int bins = 64, n_mels = 40, frames = 7;
  FloatMatrix x(frames, bins);
  for (float& v : x.data) v = static_cast<float>(rng.uniform(0.0, 2.0));
  FloatMatrix fb = mel_filterbank_matrix(bins, n_mels);
  FeatureSequence got = fbank(x, n_mels);
  for (int64_t t = 0; t < frames; ++t) {
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (int d = 0; d < bins; ++d) acc += static_cast<double>(fb.at(m, d)) * x.at(t, d);
      double want = std::log(std::max(acc, 1e-10));
      CHECK(std::abs(got.frames.at(t, m) - want) < 1e-6);
    }
  }
}

TEST_CASE("fbank rejects negative energy") {
  FloatMatrix x(1, 8);
  x.at(0, 3) = -0.5f;
  CHECK_THROWS_AS((void)fbank(x, 4), DataError);
}

TEST_CASE("DCT matrix is orthonormal") {
  const int n = 24;
  FloatMatrix m = dct_matrix(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int k = 0; k < n; ++k) dot += static_cast<double>(m.at(i, k)) * m.at(j, k);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-6);
    }
  }
}

TEST_CASE("mfcc of a constant frame has only coefficient 0 nonzero") {
  FeatureSequence fb;
  fb.kind = FeatureKind::kFbank;
  fb.frames = FloatMatrix(1, 20);
  for (float& v : fb.frames.data) v = 1.7f;
  FeatureSequence out = mfcc(fb, 20, false);
  CHECK(std::abs(out.frames.at(0, 0)) > 1.0f);
  for (int k = 1; k < 20; ++k) CHECK(std::abs(out.frames.at(0, k)) < 1e-5);
}

TEST_CASE("full-order DCT round-trips the input") {
  RngStream rng(5);
  const int n = 16;
  FeatureSequence fb;
  fb.kind = FeatureKind::kFbank;
  fb.frames = FloatMatrix(3, n);
  for (float& v : fb.frames.data) v = rng.normal_f32();
  FeatureSequence ceps = mfcc(fb, n, false);
  FloatMatrix dct = dct_matrix(n);
  // Inverse of an orthonormal DCT is its transpose.
  for (int64_t t = 0; t < 3; ++t) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += static_cast<double>(dct.at(k, i)) * ceps.frames.at(t, k);
      CHECK(std::abs(acc - fb.frames.at(t, i)) < 1e-5);
    }
  }
}

TEST_CASE("deltas of a linear ramp are constant, second deltas zero") {
  FeatureSequence fb;
  fb.kind = FeatureKind::kFbank;
  fb.frames = FloatMatrix(12, 4);
  for (int64_t t = 0; t < 12; ++t) {
    for (int64_t d = 0; d < 4; ++d) fb.frames.at(t, d) = 0.5f * static_cast<float>(t);
  }
  FeatureSequence out = mfcc(fb, 4, true);
  CHECK(out.frames.cols == 12);
  // Interior frames: edge replication distorts the first delta at the two
  // outermost frames and the second delta four frames deep.
  for (int64_t t = 2; t < 10; ++t) {
    // The DCT of a constant-per-frame ramp concentrates in coefficient 0; its
    // delta is the per-frame slope of coefficient 0.
    CHECK(out.frames.at(t, 4) == doctest::Approx(out.frames.at(2, 4)).epsilon(1e-6));
  }
  for (int64_t t = 4; t < 8; ++t) {
    CHECK(std::abs(out.frames.at(t, 8)) < 1e-6);
  }
}

TEST_CASE("mfcc validates its inputs") {
  FeatureSequence fb;
  fb.kind = FeatureKind::kFbank;
  fb.frames = FloatMatrix(1, 10);
  CHECK_THROWS_AS((void)mfcc(fb, 11, false), ConfigError);
  CHECK_THROWS_AS((void)mfcc(fb, 0, false), ConfigError);
  fb.kind = FeatureKind::kSignal;
  CHECK_THROWS_AS((void)mfcc(fb, 4, false), ConfigError);
}

TEST_CASE("normalizer on two frames [0] and [2]") {
  FloatMatrix x(2, 1);
  x.at(0, 0) = 0.0f;
  x.at(1, 0) = 2.0f;
  NormalizerFitter fit;
  fit.add(x);
  Normalizer n = fit.finish();
  CHECK(n.mean[0] == doctest::Approx(1.0));
  CHECK(n.std[0] == doctest::Approx(1.0));
  apply_normalizer_inplace(n, x);
  CHECK(x.at(0, 0) == doctest::Approx(-1.0));
  CHECK(x.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("normalizer zero-means the fitting corpus and round-trips") {
  RngStream rng(23);
  std::vector<FloatMatrix> corpus;
  NormalizerFitter fit;
  for (int u = 0; u < 5; ++u) {
    FloatMatrix m(20, 6);
    for (float& v : m.data) v = static_cast<float>(rng.uniform(-3.0, 5.0));
    fit.add(m);
    corpus.push_back(std::move(m));
  }
  Normalizer n = fit.finish();
  std::vector<double> mean(6, 0.0);
  int64_t count = 0;
  for (auto& m : corpus) {
    FloatMatrix orig = m;
    apply_normalizer_inplace(n, m);
    for (int64_t t = 0; t < m.rows; ++t) {
      for (int64_t d = 0; d < 6; ++d) {
        mean[static_cast<size_t>(d)] += m.at(t, d);
        // Invert and compare.
        double back = static_cast<double>(m.at(t, d)) * n.std[static_cast<size_t>(d)] +
                      n.mean[static_cast<size_t>(d)];
        CHECK(std::abs(back - orig.at(t, d)) < 1e-5);
      }
    }
    count += m.rows;
  }
  for (double s : mean) CHECK(std::abs(s / static_cast<double>(count)) < 1e-5);
}

TEST_CASE("constant dimension clamps std and outputs zero") {
  FloatMatrix x(10, 2);
  for (int64_t t = 0; t < 10; ++t) {
    x.at(t, 0) = 4.0f;                          // constant
    x.at(t, 1) = static_cast<float>(t) * 0.1f;  // varying
  }
  NormalizerFitter fit;
  fit.add(x);
  Normalizer n = fit.finish();
  CHECK(n.clamped_dims == 1);
  CHECK(n.std[0] == doctest::Approx(1e-8));
  apply_normalizer_inplace(n, x);
  for (int64_t t = 0; t < 10; ++t) CHECK(x.at(t, 0) == 0.0f);
}

TEST_CASE("transforms preserve frame count") {
  RngStream rng(3);
  FloatMatrix x(33, 24);
  for (float& v : x.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  FeatureSequence fb = fbank(x, 12);
  CHECK(fb.frames.rows == 33);
  FeatureSequence mf = mfcc(fb, 7, true);
  CHECK(mf.frames.rows == 33);
  CHECK(mf.frames.cols == 21);
}
