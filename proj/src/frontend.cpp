// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "seau/binio.hpp"
#include "seau/error.hpp"

namespace seau::frontend {

namespace {

constexpr double kLogFloor = 1e-10;
constexpr float kStdEpsilon = 1e-8f;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

FloatMatrix mel_filterbank_matrix(int in_bins, int n_mels) {
  if (n_mels < 1) throw ConfigError("fbank: n_mels must be >= 1");
  if (in_bins < 2) throw ConfigError("fbank: need at least 2 input bins");

  // Bins index a nominal 0..8 kHz axis; triangle centers are equally spaced
  // on the mel scale of that axis.
  const double f_max = 8000.0;
  const double mel_max = hz_to_mel(f_max);
  std::vector<double> centers(n_mels + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    double mel = mel_max * static_cast<double>(m) / (n_mels + 1);
    centers[m] = mel_to_hz(mel) / f_max * (in_bins - 1);
  }

  FloatMatrix fb(n_mels, in_bins);
  for (int m = 0; m < n_mels; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int d = 0; d < in_bins; ++d) {
      double w = 0.0;
      if (d >= lo && d <= mid && mid > lo) {
        w = (d - lo) / (mid - lo);
      } else if (d > mid && d <= hi && hi > mid) {
        w = (hi - d) / (hi - mid);
      }
      fb.at(m, d) = static_cast<float>(w);
    }
    // Degenerate narrow triangles (possible at very high n_mels) keep at
    // least the nearest bin so no filter is all-zero.
    float row_sum = 0.0f;
    for (int d = 0; d < in_bins; ++d) row_sum += fb.at(m, d);
    if (row_sum == 0.0f) {
      int nearest = static_cast<int>(std::lround(std::clamp(mid, 0.0, in_bins - 1.0)));
      fb.at(m, nearest) = 1.0f;
    }
  }
  return fb;
}

FeatureSequence fbank_apply(const FloatMatrix& signal_frames, const FloatMatrix& filterbank) {
  if (signal_frames.rows < 1) throw DataError("fbank: empty input");
  if (filterbank.cols != signal_frames.cols) {
    throw ShapeError("fbank: filterbank expects " + std::to_string(filterbank.cols) +
                     " bins, input has " + std::to_string(signal_frames.cols));
  }
  for (float v : signal_frames.data) {
    if (v < 0.0f) throw DataError("fbank: negative input energy");
  }
  const int64_t n_mels = filterbank.rows;
  FeatureSequence out;
  out.kind = FeatureKind::kFbank;
  out.frames = FloatMatrix(signal_frames.rows, n_mels);
  for (int64_t t = 0; t < signal_frames.rows; ++t) {
    const float* x = signal_frames.row(t);
    float* y = out.frames.row(t);
    for (int64_t m = 0; m < n_mels; ++m) {
      const float* w = filterbank.row(m);
      double acc = 0.0;
      for (int64_t d = 0; d < signal_frames.cols; ++d) acc += static_cast<double>(w[d]) * x[d];
      y[m] = static_cast<float>(std::log(std::max(acc, kLogFloor)));
    }
  }
  return out;
}

FeatureSequence fbank(const FloatMatrix& signal_frames, int n_mels) {
  return fbank_apply(signal_frames,
                     mel_filterbank_matrix(static_cast<int>(signal_frames.cols), n_mels));
}

FloatMatrix dct_matrix(int n) {
  FloatMatrix m(n, n);
  const double scale0 = std::sqrt(1.0 / n);
  const double scale = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      double v = std::cos(std::numbers::pi * (i + 0.5) * k / n);
      m.at(k, i) = static_cast<float>((k == 0 ? scale0 : scale) * v);
    }
  }
  return m;
}

namespace {

// +/-2-frame regression deltas with edge replication.
FloatMatrix deltas(const FloatMatrix& x) {
  FloatMatrix d(x.rows, x.cols);
  const double denom = 2.0 * (1.0 * 1.0 + 2.0 * 2.0);
  for (int64_t t = 0; t < x.rows; ++t) {
    for (int64_t c = 0; c < x.cols; ++c) {
      double acc = 0.0;
      for (int tau = 1; tau <= 2; ++tau) {
        int64_t tp = std::min(x.rows - 1, t + tau);
        int64_t tm = std::max<int64_t>(0, t - tau);
        acc += tau * (static_cast<double>(x.at(tp, c)) - x.at(tm, c));
      }
      d.at(t, c) = static_cast<float>(acc / denom);
    }
  }
  return d;
}

}  // namespace

FeatureSequence mfcc(const FeatureSequence& fbank_features, int n_ceps, bool with_deltas) {
  if (fbank_features.kind != FeatureKind::kFbank) {
    throw ConfigError("mfcc: input must be fbank features");
  }
  const int n_mels = static_cast<int>(fbank_features.frames.cols);
  if (n_ceps < 1 || n_ceps > n_mels) {
    throw ConfigError("mfcc: n_ceps " + std::to_string(n_ceps) + " out of range [1, " +
                      std::to_string(n_mels) + "]");
  }
  FloatMatrix dct = dct_matrix(n_mels);

  FloatMatrix ceps(fbank_features.frames.rows, n_ceps);
  for (int64_t t = 0; t < fbank_features.frames.rows; ++t) {
    const float* x = fbank_features.frames.row(t);
    for (int k = 0; k < n_ceps; ++k) {
      const float* w = dct.row(k);
      double acc = 0.0;
      for (int i = 0; i < n_mels; ++i) acc += static_cast<double>(w[i]) * x[i];
      ceps.at(t, k) = static_cast<float>(acc);
    }
  }

  FeatureSequence out;
  out.kind = FeatureKind::kMfcc;
  out.frame_rate_hz = fbank_features.frame_rate_hz;
  if (!with_deltas) {
    out.frames = std::move(ceps);
    return out;
  }
  FloatMatrix d1 = deltas(ceps);
  FloatMatrix d2 = deltas(d1);
  out.frames = FloatMatrix(ceps.rows, 3 * n_ceps);
  for (int64_t t = 0; t < ceps.rows; ++t) {
    float* y = out.frames.row(t);
    for (int k = 0; k < n_ceps; ++k) {
      y[k] = ceps.at(t, k);
      y[n_ceps + k] = d1.at(t, k);
      y[2 * n_ceps + k] = d2.at(t, k);
    }
  }
  return out;
}

void NormalizerFitter::add(const FloatMatrix& frames) {
  if (dim_ < 0) {
    dim_ = frames.cols;
    sum_.assign(static_cast<size_t>(dim_), 0.0);
    sum_sq_.assign(static_cast<size_t>(dim_), 0.0);
  } else if (frames.cols != dim_) {
    throw ShapeError("normalizer: dimension changed from " + std::to_string(dim_) + " to " +
                     std::to_string(frames.cols));
  }
  for (int64_t t = 0; t < frames.rows; ++t) {
    const float* x = frames.row(t);
    for (int64_t d = 0; d < dim_; ++d) {
      sum_[d] += x[d];
      sum_sq_[d] += static_cast<double>(x[d]) * x[d];
    }
  }
  count_ += frames.rows;
}

Normalizer NormalizerFitter::finish() const {
  if (count_ == 0) throw DataError("normalizer: no frames seen");
  Normalizer n;
  n.mean.resize(static_cast<size_t>(dim_));
  n.std.resize(static_cast<size_t>(dim_));
  for (int64_t d = 0; d < dim_; ++d) {
    double mean = sum_[d] / static_cast<double>(count_);
    double var = std::max(0.0, sum_sq_[d] / static_cast<double>(count_) - mean * mean);
    double sd = std::sqrt(var);
    n.mean[d] = static_cast<float>(mean);
    if (sd < kStdEpsilon) {
      n.std[d] = kStdEpsilon;
      ++n.clamped_dims;
    } else {
      n.std[d] = static_cast<float>(sd);
    }
  }
  return n;
}

FeatureSequence apply_normalizer(const Normalizer& norm, const FeatureSequence& features) {
  FeatureSequence out = features;
  apply_normalizer_inplace(norm, out.frames);
  return out;
}

void apply_normalizer_inplace(const Normalizer& norm, FloatMatrix& frames) {
  if (frames.cols != static_cast<int64_t>(norm.mean.size())) {
    throw ShapeError("normalizer: fitted on dim " + std::to_string(norm.mean.size()) +
                     ", applied to dim " + std::to_string(frames.cols));
  }
  for (int64_t t = 0; t < frames.rows; ++t) {
    float* x = frames.row(t);
    for (int64_t d = 0; d < frames.cols; ++d) {
      x[d] = (x[d] - norm.mean[d]) / norm.std[d];
    }
  }
}

void Normalizer::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes("SEAUNRM", 7);
  w.u32(1);
  w.u32(static_cast<uint32_t>(mean.size()));
  w.u32(static_cast<uint32_t>(clamped_dims));
  w.f32_array(mean.data(), mean.size());
  w.f32_array(std.data(), std.size());
  write_file_atomic(path, w.data());
}

Normalizer Normalizer::load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[7];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, "SEAUNRM", 7) != 0) {
    throw IntegrityError(path.string() + ": bad normalizer magic");
  }
  if (r.u32() != 1) throw IntegrityError(path.string() + ": unsupported normalizer version");
  Normalizer n;
  uint32_t dim = r.u32();
  n.clamped_dims = static_cast<int>(r.u32());
  n.mean = r.f32_array(dim);
  n.std = r.f32_array(dim);
  return n;
}

}  // namespace seau::frontend
