// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "seau/binio.hpp"
#include "seau/checkpoint.hpp"
#include "seau/error.hpp"
#include "seau/nn.hpp"

namespace seau::quantizer {

namespace {

double sq_distance(const float* a, const float* b, int64_t d) {
  double acc = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

void Codebook::validate() const {
  if (centroids.rows < 2) throw ConfigError("codebook: need at least 2 clusters");
  for (float v : centroids.data) {
    if (!std::isfinite(v)) throw NumericError("codebook: non-finite centroid");
  }
  for (int64_t i = 0; i < centroids.rows; ++i) {
    for (int64_t j = i + 1; j < centroids.rows; ++j) {
      if (std::memcmp(centroids.row(i), centroids.row(j),
                      static_cast<size_t>(centroids.cols) * sizeof(float)) == 0) {
        throw DataError("codebook: centroids " + std::to_string(i) + " and " + std::to_string(j) +
                        " are identical");
      }
    }
  }
}

void Codebook::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes("SEAUKM", 6);
  w.u32(1);
  w.u32(static_cast<uint32_t>(centroids.rows));
  w.u32(static_cast<uint32_t>(centroids.cols));
  w.u8(static_cast<uint8_t>(kind));
  w.i32(layer_index);
  w.u32(static_cast<uint32_t>(inertia_history.size()));
  w.f32_array(inertia_history.data(), inertia_history.size());
  w.f32_array(centroids.data.data(), centroids.data.size());
  write_file_atomic(path, w.data());
}

Codebook Codebook::load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[6];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, "SEAUKM", 6) != 0) {
    throw IntegrityError(path.string() + ": bad codebook magic");
  }
  if (r.u32() != 1) throw IntegrityError(path.string() + ": unsupported codebook version");
  Codebook cb;
  uint32_t c = r.u32();
  uint32_t d = r.u32();
  cb.kind = static_cast<corpus::FeatureKind>(r.u8());
  cb.layer_index = r.i32();
  cb.inertia_history = r.f32_array(r.u32());
  cb.centroids.rows = c;
  cb.centroids.cols = d;
  cb.centroids.data = r.f32_array(static_cast<size_t>(c) * d);
  return cb;
}

Codebook kmeans_fit(const FloatMatrix& frames, int n_clusters, const KmeansOptions& options) {
  if (n_clusters < 2) throw ConfigError("kmeans: need at least 2 clusters");
  if (frames.rows < n_clusters) {
    throw DataError("kmeans: " + std::to_string(frames.rows) + " frames for " +
                    std::to_string(n_clusters) + " clusters");
  }
  const int64_t dim = frames.cols;
  RngStream rng(options.seed);

  // Capped uniform subsample, seeded.
  FloatMatrix sample;
  const FloatMatrix* data = &frames;
  if (options.sample_cap > 0 && frames.rows > options.sample_cap) {
    std::vector<int64_t> idx(static_cast<size_t>(frames.rows));
    std::iota(idx.begin(), idx.end(), 0);
    RngStream shuffle = rng.fork("subsample");
    for (int64_t i = frames.rows - 1; i > 0; --i) {
      int64_t j = shuffle.uniform_int(0, i + 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    sample = FloatMatrix(options.sample_cap, dim);
    for (int64_t i = 0; i < options.sample_cap; ++i) {
      std::memcpy(sample.row(i), frames.row(idx[static_cast<size_t>(i)]),
                  static_cast<size_t>(dim) * sizeof(float));
    }
    data = &sample;
  }
  const int64_t n = data->rows;

  // k-means++ seeding.
  FloatMatrix centroids(n_clusters, dim);
  std::vector<double> min_dist(static_cast<size_t>(n), 0.0);
  RngStream seed_rng = rng.fork("kmeanspp");
  {
    int64_t first = seed_rng.uniform_int(0, n);
    std::memcpy(centroids.row(0), data->row(first), static_cast<size_t>(dim) * sizeof(float));
    for (int64_t i = 0; i < n; ++i) {
      min_dist[static_cast<size_t>(i)] = sq_distance(data->row(i), centroids.row(0), dim);
    }
    for (int c = 1; c < n_clusters; ++c) {
      double total = 0.0;
      for (double d : min_dist) total += d;
      int64_t pick;
      if (total <= 0.0) {
        pick = seed_rng.uniform_int(0, n);  // all remaining points coincide
      } else {
        double target = seed_rng.uniform() * total;
        double acc = 0.0;
        pick = n - 1;
        for (int64_t i = 0; i < n; ++i) {
          acc += min_dist[static_cast<size_t>(i)];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      }
      std::memcpy(centroids.row(c), data->row(pick), static_cast<size_t>(dim) * sizeof(float));
      for (int64_t i = 0; i < n; ++i) {
        min_dist[static_cast<size_t>(i)] = std::min(
            min_dist[static_cast<size_t>(i)], sq_distance(data->row(i), centroids.row(c), dim));
      }
    }
  }

  Codebook cb;
  cb.centroids = centroids;
  std::vector<int> assign(static_cast<size_t>(n), 0);
  std::vector<double> dists(static_cast<size_t>(n), 0.0);
  FloatMatrix prev_centroids;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    // Assignment and inertia under the current centroids.
    double inertia = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const float* x = data->row(i);
      int best = 0;
      double best_d = sq_distance(x, cb.centroids.row(0), dim);
      for (int c = 1; c < n_clusters; ++c) {
        double d = sq_distance(x, cb.centroids.row(c), dim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<size_t>(i)] = best;
      dists[static_cast<size_t>(i)] = best_d;
      inertia += best_d;
    }

    if (!cb.inertia_history.empty()) {
      const double prev = cb.inertia_history.back();
      if (inertia > prev) {
        // A float-rounded centroid update can nudge the cost up once the fit
        // has converged; keep the previous centroids and stop.
        cb.centroids = prev_centroids;
        break;
      }
      cb.inertia_history.push_back(static_cast<float>(inertia));
      if (prev - inertia <= options.tol * prev) break;
    } else {
      cb.inertia_history.push_back(static_cast<float>(inertia));
    }

    // Centroid update (double accumulators).
    prev_centroids = cb.centroids;
    std::vector<double> sums(static_cast<size_t>(n_clusters) * dim, 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(n_clusters), 0);
    for (int64_t i = 0; i < n; ++i) {
      const float* x = data->row(i);
      double* s = sums.data() + static_cast<size_t>(assign[static_cast<size_t>(i)]) * dim;
      for (int64_t d = 0; d < dim; ++d) s[d] += x[d];
      ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
    }
    for (int c = 0; c < n_clusters; ++c) {
      if (counts[static_cast<size_t>(c)] == 0) {
        // Re-seed from the farthest point.
        int64_t far = 0;
        for (int64_t i = 1; i < n; ++i) {
          if (dists[static_cast<size_t>(i)] > dists[static_cast<size_t>(far)]) far = i;
        }
        std::memcpy(cb.centroids.row(c), data->row(far),
                    static_cast<size_t>(dim) * sizeof(float));
        dists[static_cast<size_t>(far)] = 0.0;  // don't pick the same point twice
        continue;
      }
      const double* s = sums.data() + static_cast<size_t>(c) * dim;
      float* dst = cb.centroids.row(c);
      for (int64_t d = 0; d < dim; ++d) {
        dst[d] = static_cast<float>(s[d] / static_cast<double>(counts[static_cast<size_t>(c)]));
      }
    }
  }
  return cb;
}

std::vector<uint16_t> assign_units(const Codebook& codebook, const FloatMatrix& frames) {
  if (frames.cols != codebook.centroids.cols) {
    throw ShapeError("assign_units: frames dim " + std::to_string(frames.cols) +
                     " vs centroid dim " + std::to_string(codebook.centroids.cols));
  }
  const int c = codebook.n_clusters();
  std::vector<uint16_t> units(static_cast<size_t>(frames.rows));
  for (int64_t i = 0; i < frames.rows; ++i) {
    const float* x = frames.row(i);
    int best = 0;
    double best_d = sq_distance(x, codebook.centroids.row(0), frames.cols);
    for (int k = 1; k < c; ++k) {
      double d = sq_distance(x, codebook.centroids.row(k), frames.cols);
      if (d < best_d) {  // strict: ties keep the lowest index
        best_d = d;
        best = k;
      }
    }
    units[static_cast<size_t>(i)] = static_cast<uint16_t>(best);
  }
  return units;
}

std::vector<uint16_t> downsample_alignment(const std::vector<uint16_t>& alignment, int64_t t_sub) {
  const int64_t t = static_cast<int64_t>(alignment.size());
  if (t == 0) throw DataError("downsample_alignment: empty alignment");
  if (nn::subsampled_length(t) != t_sub) {
    throw DataError("downsample_alignment: " + std::to_string(t) + " frames cannot map to " +
                    std::to_string(t_sub) + " steps");
  }
  std::vector<uint16_t> out(static_cast<size_t>(t_sub));
  for (int64_t i = 0; i < t_sub; ++i) {
    out[static_cast<size_t>(i)] =
        alignment[static_cast<size_t>(std::min(t - 1, i * nn::kSubsampleFactor))];
  }
  return out;
}

UnitQualityReport unit_quality(const std::vector<std::vector<uint16_t>>& units,
                               const std::vector<std::vector<uint16_t>>& phones) {
  if (units.size() != phones.size()) {
    throw DataError("unit_quality: " + std::to_string(units.size()) + " unit sequences vs " +
                    std::to_string(phones.size()) + " alignments");
  }
  int max_unit = 0, max_phone = 0;
  int64_t total = 0, switches = 0, pairs = 0;
  for (size_t u = 0; u < units.size(); ++u) {
    if (units[u].size() != phones[u].size()) {
      throw DataError("unit_quality: length mismatch in sequence " + std::to_string(u) + " (" +
                      std::to_string(units[u].size()) + " units vs " +
                      std::to_string(phones[u].size()) + " phones)");
    }
    for (size_t t = 0; t < units[u].size(); ++t) {
      max_unit = std::max(max_unit, static_cast<int>(units[u][t]));
      max_phone = std::max(max_phone, static_cast<int>(phones[u][t]));
      ++total;
      if (t > 0) {
        ++pairs;
        if (units[u][t] != units[u][t - 1]) ++switches;
      }
    }
  }
  if (total == 0) throw DataError("unit_quality: no frames");

  const int nu = max_unit + 1, np = max_phone + 1;
  std::vector<int64_t> joint(static_cast<size_t>(nu) * np, 0);
  for (size_t u = 0; u < units.size(); ++u) {
    for (size_t t = 0; t < units[u].size(); ++t) {
      ++joint[static_cast<size_t>(units[u][t]) * np + phones[u][t]];
    }
  }

  std::vector<double> p_unit(static_cast<size_t>(nu), 0.0), p_phone(static_cast<size_t>(np), 0.0);
  double cluster_purity = 0.0, phone_purity = 0.0;
  for (int z = 0; z < nu; ++z) {
    int64_t row_max = 0, row_sum = 0;
    for (int p = 0; p < np; ++p) {
      int64_t c = joint[static_cast<size_t>(z) * np + p];
      row_sum += c;
      row_max = std::max(row_max, c);
    }
    p_unit[static_cast<size_t>(z)] = static_cast<double>(row_sum) / static_cast<double>(total);
    cluster_purity += static_cast<double>(row_max) / static_cast<double>(total);
  }
  for (int p = 0; p < np; ++p) {
    int64_t col_max = 0, col_sum = 0;
    for (int z = 0; z < nu; ++z) {
      int64_t c = joint[static_cast<size_t>(z) * np + p];
      col_sum += c;
      col_max = std::max(col_max, c);
    }
    p_phone[static_cast<size_t>(p)] = static_cast<double>(col_sum) / static_cast<double>(total);
    phone_purity += static_cast<double>(col_max) / static_cast<double>(total);
  }

  double mi = 0.0, h_phone = 0.0;
  for (int p = 0; p < np; ++p) {
    if (p_phone[static_cast<size_t>(p)] > 0.0) {
      h_phone -= p_phone[static_cast<size_t>(p)] * std::log(p_phone[static_cast<size_t>(p)]);
    }
  }
  for (int z = 0; z < nu; ++z) {
    for (int p = 0; p < np; ++p) {
      int64_t c = joint[static_cast<size_t>(z) * np + p];
      if (c == 0) continue;
      double pj = static_cast<double>(c) / static_cast<double>(total);
      mi += pj * std::log(pj / (p_unit[static_cast<size_t>(z)] * p_phone[static_cast<size_t>(p)]));
    }
  }

  UnitQualityReport report;
  report.cluster_purity = cluster_purity;
  report.phone_purity = phone_purity;
  report.pnmi = h_phone > 0.0 ? std::max(0.0, mi / h_phone) : 0.0;
  report.switch_rate = pairs > 0 ? static_cast<double>(switches) / static_cast<double>(pairs) : 0.0;
  return report;
}

void write_unit_file(const std::filesystem::path& path, const std::vector<uint16_t>& units,
                     int n_clusters) {
  ByteWriter w;
  w.bytes("SEAUU", 5);
  w.u32(1);
  w.u32(static_cast<uint32_t>(units.size()));
  w.u32(static_cast<uint32_t>(n_clusters));
  w.u16_array(units.data(), units.size());
  write_file_atomic(path, w.data());
}

std::vector<uint16_t> read_unit_file(const std::filesystem::path& path, int* n_clusters) {
  auto bytes = read_file(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[5];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, "SEAUU", 5) != 0) {
    throw IntegrityError(path.string() + ": bad unit magic");
  }
  if (r.u32() != 1) throw IntegrityError(path.string() + ": unsupported unit file version");
  uint32_t t = r.u32();
  uint32_t c = r.u32();
  if (n_clusters) *n_clusters = static_cast<int>(c);
  auto units = r.u16_array(t);
  if (!r.done()) throw IntegrityError(path.string() + ": trailing bytes");
  return units;
}

namespace {

FloatMatrix concat_all_rows(const std::vector<FloatMatrix>& mats) {
  int64_t rows = 0;
  for (const auto& m : mats) rows += m.rows;
  if (mats.empty() || rows == 0) throw DataError("no frames collected for clustering");
  FloatMatrix out(rows, mats.front().cols);
  int64_t r = 0;
  for (const auto& m : mats) {
    std::memcpy(out.row(r), m.data.data(), m.data.size() * sizeof(float));
    r += m.rows;
  }
  return out;
}

}  // namespace

UnitExtraction extract_seau_targets(const std::filesystem::path& checkpoint_path,
                                    const std::filesystem::path& fbank_dir,
                                    const corpus::CorpusManifest& manifest,
                                    const std::string& split, const SeauOptions& options) {
  ad::Checkpoint ckpt = ad::Checkpoint::load(checkpoint_path);
  if (!ckpt.config.contains("encoder")) {
    throw CheckpointError(checkpoint_path.string() + ": no encoder architecture recorded");
  }
  nn::EncoderConfig enc_cfg = nn::EncoderConfig::from_json(ckpt.config["encoder"]);
  nn::Encoder encoder(enc_cfg, RngStream(0));
  ckpt.load_into_groups(encoder.groups());

  int layer = options.layer_index;
  if (layer < 0) layer = static_cast<int>(std::lround(0.75 * enc_cfg.n_blocks));
  layer = std::max(1, layer);
  if (layer > enc_cfg.n_blocks) {
    throw ConfigError("seau: layer " + std::to_string(layer) + " out of 1.." +
                      std::to_string(enc_cfg.n_blocks));
  }

  // Forward every utterance once in eval mode, keeping the chosen layer.
  std::vector<FloatMatrix> hidden;
  std::vector<std::string> ids;
  for (const corpus::ManifestEntry* e : manifest.split(split)) {
    corpus::FrameArchive arc = corpus::read_frame_archive(fbank_dir / (e->id + ".bin"));
    auto out = encoder.forward(arc.frames, /*train=*/false, RngStream(0));
    const ad::Tensor& h = out.layers[static_cast<size_t>(layer - 1)];
    FloatMatrix m(h.dim(0), h.dim(1));
    std::copy(h.values().begin(), h.values().end(), m.data.begin());
    hidden.push_back(std::move(m));
    ids.push_back(e->id);
  }

  // Normalize the clustering space, fit, then assign every utterance.
  frontend::NormalizerFitter fitter;
  for (const auto& m : hidden) fitter.add(m);
  UnitExtraction result;
  result.normalizer = fitter.finish();
  for (auto& m : hidden) frontend::apply_normalizer_inplace(result.normalizer, m);

  result.codebook = kmeans_fit(concat_all_rows(hidden), options.n_clusters, options.kmeans);
  result.codebook.kind = corpus::FeatureKind::kEncoder;
  result.codebook.layer_index = layer;

  for (size_t i = 0; i < hidden.size(); ++i) {
    result.units.emplace_back(ids[i], assign_units(result.codebook, hidden[i]));
  }
  return result;
}

UnitExtraction extract_mfcc_targets(const std::filesystem::path& mfcc_dir,
                                    const corpus::CorpusManifest& manifest,
                                    const std::string& split, int n_clusters,
                                    const KmeansOptions& kmeans) {
  std::vector<FloatMatrix> feats;
  std::vector<std::string> ids;
  for (const corpus::ManifestEntry* e : manifest.split(split)) {
    corpus::FrameArchive arc = corpus::read_frame_archive(mfcc_dir / (e->id + ".bin"));
    feats.push_back(std::move(arc.frames));
    ids.push_back(e->id);
  }

  frontend::NormalizerFitter fitter;
  for (const auto& m : feats) fitter.add(m);
  UnitExtraction result;
  result.normalizer = fitter.finish();
  for (auto& m : feats) frontend::apply_normalizer_inplace(result.normalizer, m);

  result.codebook = kmeans_fit(concat_all_rows(feats), n_clusters, kmeans);
  result.codebook.kind = corpus::FeatureKind::kMfcc;

  // Frame-rate assignment reduced to the unit rate by the same center rule
  // used for alignments.
  for (size_t i = 0; i < feats.size(); ++i) {
    std::vector<uint16_t> frame_units = assign_units(result.codebook, feats[i]);
    const int64_t t_sub = nn::subsampled_length(feats[i].rows);
    result.units.emplace_back(ids[i], downsample_alignment(frame_units, t_sub));
  }
  return result;
}

}  // namespace seau::quantizer
