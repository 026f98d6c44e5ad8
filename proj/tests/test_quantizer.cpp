// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "seau/error.hpp"
#include "seau/quantizer.hpp"
#include "seau/rng.hpp"

using namespace seau;
using namespace seau::quantizer;

namespace {

// Exhaustive nearest-centroid oracle in double precision.
int nearest_oracle(const FloatMatrix& centroids, const float* x) {
  int best = 0;
  double best_d = 0.0;
  for (int64_t c = 0; c < centroids.rows; ++c) {
    double d = 0.0;
    for (int64_t j = 0; j < centroids.cols; ++j) {
      double diff = static_cast<double>(x[j]) - centroids.at(c, j);
      d += diff * diff;
    }
    if (c == 0 || d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

FloatMatrix three_blobs(int per_blob, uint64_t seed, std::vector<int>* labels = nullptr) {
  // Centers 10 sigma apart with sigma = 1.
  const double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
  RngStream rng(seed);
  FloatMatrix x(3 * per_blob, 2);
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < per_blob; ++i) {
      const int64_t row = b * per_blob + i;
      x.at(row, 0) = static_cast<float>(centers[b][0] + rng.normal());
      x.at(row, 1) = static_cast<float>(centers[b][1] + rng.normal());
      if (labels) labels->push_back(b);
    }
  }
  return x;
}

}  // namespace

TEST_CASE("kmeans recovers well-separated blobs exactly") {
  std::vector<int> truth;
  FloatMatrix x = three_blobs(60, 5, &truth);
  KmeansOptions opts;
  opts.seed = 3;
  Codebook cb = kmeans_fit(x, 3, opts);
  cb.validate();

  std::vector<uint16_t> units = assign_units(cb, x);
  // Exact partition recovery: unit ids are a bijection of blob labels.
  std::map<int, std::set<int>> blob_to_unit, unit_to_blob;
  for (size_t i = 0; i < units.size(); ++i) {
    blob_to_unit[truth[i]].insert(units[i]);
    unit_to_blob[units[i]].insert(truth[i]);
  }
  CHECK(blob_to_unit.size() == 3);
  for (const auto& [blob, set] : blob_to_unit) CHECK(set.size() == 1);
  for (const auto& [unit, set] : unit_to_blob) CHECK(set.size() == 1);

  // Final inertia matches the brute-force assignment oracle.
  double oracle_inertia = 0.0;
  for (int64_t i = 0; i < x.rows; ++i) {
    int c = nearest_oracle(cb.centroids, x.row(i));
    for (int64_t j = 0; j < 2; ++j) {
      double diff = static_cast<double>(x.at(i, j)) - cb.centroids.at(c, j);
      oracle_inertia += diff * diff;
    }
  }
  CHECK(cb.inertia_history.back() ==
        doctest::Approx(oracle_inertia).epsilon(1e-4));
}

TEST_CASE("kmeans inertia history is non-increasing on many random fits") {
  RngStream rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    FloatMatrix x(200, 5);
    for (float& v : x.data) v = rng.normal_f32();
    KmeansOptions opts;
    opts.seed = static_cast<uint64_t>(trial);
    opts.max_iter = 40;
    opts.tol = 0.0;  // run to max_iter so late iterations are exercised
    Codebook cb = kmeans_fit(x, 8, opts);
    REQUIRE(!cb.inertia_history.empty());
    for (size_t i = 1; i < cb.inertia_history.size(); ++i) {
      CHECK(cb.inertia_history[i] <= cb.inertia_history[i - 1]);
    }
  }
}

TEST_CASE("kmeans with C = number of distinct points reaches zero inertia") {
  FloatMatrix x(8, 2);
  for (int i = 0; i < 8; ++i) {
    x.at(i, 0) = static_cast<float>(i);
    x.at(i, 1) = static_cast<float>(3 * i - 5);
  }
  KmeansOptions opts;
  opts.seed = 1;
  opts.max_iter = 100;
  Codebook cb = kmeans_fit(x, 8, opts);
  CHECK(cb.inertia_history.back() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kmeans is deterministic per seed") {
  FloatMatrix x = three_blobs(40, 9);
  KmeansOptions opts;
  opts.seed = 11;
  Codebook a = kmeans_fit(x, 5, opts);
  Codebook b = kmeans_fit(x, 5, opts);
  CHECK(a.centroids.data == b.centroids.data);
  CHECK(a.inertia_history == b.inertia_history);
  opts.seed = 12;
  Codebook c = kmeans_fit(x, 5, opts);
  CHECK(a.centroids.data != c.centroids.data);
}

TEST_CASE("kmeans rejects too little data") {
  FloatMatrix x(3, 2);
  KmeansOptions opts;
  CHECK_THROWS_AS((void)kmeans_fit(x, 4, opts), DataError);
}

TEST_CASE("assignment agrees with the exhaustive scan oracle on random frames") {
  RngStream rng(23);
  Codebook cb;
  cb.centroids = FloatMatrix(12, 6);
  for (float& v : cb.centroids.data) v = rng.normal_f32();
  FloatMatrix frames(10000, 6);
  for (float& v : frames.data) v = rng.normal_f32();
  std::vector<uint16_t> units = assign_units(cb, frames);
  for (int64_t i = 0; i < frames.rows; ++i) {
    CHECK(units[static_cast<size_t>(i)] == nearest_oracle(cb.centroids, frames.row(i)));
  }
}

TEST_CASE("assignment basics: exact centroid hit and tie-breaking") {
  // Centroids 2 and 5 sit symmetrically around x = 2; everything else is far.
  Codebook cb;
  cb.centroids = FloatMatrix(6, 2);
  for (int i = 0; i < 6; ++i) {
    cb.centroids.at(i, 0) = 40.0f + 10.0f * static_cast<float>(i);
    cb.centroids.at(i, 1) = 40.0f;
  }
  cb.centroids.at(2, 0) = 1.0f;
  cb.centroids.at(2, 1) = 0.0f;
  cb.centroids.at(5, 0) = 3.0f;
  cb.centroids.at(5, 1) = 0.0f;
  cb.centroids.at(4, 0) = 7.0f;
  cb.centroids.at(4, 1) = 0.0f;

  FloatMatrix frames(2, 2);
  // Frame 0 equals centroid 4 exactly.
  frames.at(0, 0) = 7.0f;
  frames.at(0, 1) = 0.0f;
  // Frame 1 is equidistant from centroids 2 and 5: the tie goes to 2.
  frames.at(1, 0) = 2.0f;
  frames.at(1, 1) = 0.0f;
  auto units = assign_units(cb, frames);
  CHECK(units[0] == 4);
  CHECK(units[1] == 2);

  FloatMatrix bad(1, 3);
  CHECK_THROWS_AS((void)assign_units(cb, bad), ShapeError);
}

TEST_CASE("unit quality on perfect and degenerate unit assignments") {
  // Units identical to phones: all purities and PNMI are 1.
  std::vector<std::vector<uint16_t>> phones = {{0, 0, 1, 1, 2, 2, 1}, {2, 2, 0, 0, 1, 1, 1}};
  UnitQualityReport perfect = unit_quality(phones, phones);
  CHECK(perfect.cluster_purity == doctest::Approx(1.0));
  CHECK(perfect.phone_purity == doctest::Approx(1.0));
  CHECK(perfect.pnmi == doctest::Approx(1.0));

  // Constant units: no information, no switches.
  std::vector<std::vector<uint16_t>> constant = {{3, 3, 3, 3, 3, 3, 3}, {3, 3, 3, 3, 3, 3, 3}};
  UnitQualityReport flat = unit_quality(constant, phones);
  CHECK(flat.pnmi == doctest::Approx(0.0));
  CHECK(flat.switch_rate == doctest::Approx(0.0));

  // Relabeling units leaves purity and PNMI unchanged.
  std::vector<std::vector<uint16_t>> relabeled = phones;
  for (auto& seq : relabeled) {
    for (auto& u : seq) u = static_cast<uint16_t>((u + 5) % 7 + 1);
  }
  UnitQualityReport renamed = unit_quality(relabeled, phones);
  CHECK(renamed.cluster_purity == doctest::Approx(perfect.cluster_purity));
  CHECK(renamed.pnmi == doctest::Approx(1.0));
}

TEST_CASE("PNMI matches a direct contingency-table computation") {
  // Random 2-phone / 2-unit table, compared against hand entropy math.
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<uint16_t> units, phones;
    int64_t counts[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < 200; ++i) {
      int z = static_cast<int>(rng.uniform_int(0, 2));
      int p = static_cast<int>(rng.uniform_int(0, 2));
      units.push_back(static_cast<uint16_t>(z));
      phones.push_back(static_cast<uint16_t>(p));
      ++counts[z][p];
    }
    UnitQualityReport got = unit_quality({units}, {phones});

    const double total = 200.0;
    double pz[2] = {(counts[0][0] + counts[0][1]) / total, (counts[1][0] + counts[1][1]) / total};
    double pp[2] = {(counts[0][0] + counts[1][0]) / total, (counts[0][1] + counts[1][1]) / total};
    double mi = 0.0, h = 0.0;
    for (int p = 0; p < 2; ++p) {
      if (pp[p] > 0) h -= pp[p] * std::log(pp[p]);
    }
    for (int z = 0; z < 2; ++z) {
      for (int p = 0; p < 2; ++p) {
        double pj = counts[z][p] / total;
        if (pj > 0) mi += pj * std::log(pj / (pz[z] * pp[p]));
      }
    }
    double want = h > 0 ? std::max(0.0, mi / h) : 0.0;
    CHECK(std::abs(got.pnmi - want) < 1e-9);
    CHECK(got.pnmi >= 0.0);
    CHECK(got.pnmi <= 1.0);
  }
}

TEST_CASE("unit quality validates lengths") {
  CHECK_THROWS_AS((void)unit_quality({{1, 2}}, {{1, 2, 3}}), DataError);
  CHECK_THROWS_AS((void)unit_quality({{1}}, {{1}, {2}}), DataError);
}

TEST_CASE("alignment downsampling picks receptive-field centers") {
  std::vector<uint16_t> alignment(17);
  for (size_t t = 0; t < alignment.size(); ++t) alignment[t] = static_cast<uint16_t>(t);
  // T=17 -> T'=5; centers 0, 4, 8, 12, 16.
  auto down = downsample_alignment(alignment, 5);
  CHECK(down == std::vector<uint16_t>{0, 4, 8, 12, 16});
  CHECK_THROWS_AS((void)downsample_alignment(alignment, 4), DataError);
}

TEST_CASE("unit and codebook files round-trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "seau_test_units";
  fs::create_directories(dir);

  std::vector<uint16_t> units = {3, 1, 4, 1, 5, 9, 2, 6};
  write_unit_file(dir / "u.bin", units, 16);
  int c = 0;
  auto back = read_unit_file(dir / "u.bin", &c);
  CHECK(back == units);
  CHECK(c == 16);

  Codebook cb;
  cb.centroids = FloatMatrix(4, 3);
  RngStream rng(2);
  for (float& v : cb.centroids.data) v = rng.normal_f32();
  cb.kind = corpus::FeatureKind::kEncoder;
  cb.layer_index = 3;
  cb.inertia_history = {9.0f, 4.0f, 2.5f};
  cb.save(dir / "cb.bin");
  Codebook cb2 = Codebook::load(dir / "cb.bin");
  CHECK(cb2.centroids.data == cb.centroids.data);
  CHECK(cb2.kind == corpus::FeatureKind::kEncoder);
  CHECK(cb2.layer_index == 3);
  CHECK(cb2.inertia_history == cb.inertia_history);
  fs::remove_all(dir);
}

TEST_CASE("sample cap keeps fits bounded and deterministic") {
  RngStream rng(77);
  FloatMatrix x(5000, 3);
  for (float& v : x.data) v = rng.normal_f32();
  KmeansOptions opts;
  opts.seed = 5;
  opts.sample_cap = 500;
  Codebook a = kmeans_fit(x, 4, opts);
  Codebook b = kmeans_fit(x, 4, opts);
  CHECK(a.centroids.data == b.centroids.data);
}
