#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "swire/baseline/bow.hpp"
#include "swire/baseline/hog.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

using namespace swire;
using namespace swire::baseline;

namespace {

// Per-pixel HOG written directly from the definition: central differences
// with replicated borders, unsigned angle, linear split between the two
// nearest bin centres b*pi/bins, then L2 over each 2x2 cell block.
std::vector<double> hog_oracle(const GrayImage& img, int cell, int bins) {
  const int cx = (img.width + cell - 1) / cell, cy = (img.height + cell - 1) / cell;
  std::vector<double> h(static_cast<std::size_t>(cx * cy * bins), 0.0);
  auto px = [&](int x, int y) {
    return static_cast<double>(img.at(std::clamp(x, 0, img.width - 1), std::clamp(y, 0, img.height - 1)));
  };
  for (int y = 0; y < cy * cell; ++y)
    for (int x = 0; x < cx * cell; ++x) {
      const double gx = px(x + 1, y) - px(x - 1, y), gy = px(x, y + 1) - px(x, y - 1);
      const double m = std::sqrt(gx * gx + gy * gy);
      if (m == 0) continue;
      double a = std::atan2(gy, gx);
      while (a < 0) a += std::numbers::pi;
      while (a >= std::numbers::pi) a -= std::numbers::pi;
      const double pos = a / (std::numbers::pi / bins);
      const int b0 = static_cast<int>(pos) % bins;
      const double t = pos - static_cast<int>(pos);
      const std::size_t base = static_cast<std::size_t>(((y / cell) * cx + x / cell) * bins);
      h[base + b0] += m * (1 - t);
      h[base + (b0 + 1) % bins] += m * t;
    }
  for (int by = 0; by < cy; by += 2)
    for (int bx = 0; bx < cx; bx += 2) {
      double sq = 0;
      for (int y = by; y < std::min(by + 2, cy); ++y)
        for (int x = bx; x < std::min(bx + 2, cx); ++x)
          for (int b = 0; b < bins; ++b) sq += h[(y * cx + x) * bins + b] * h[(y * cx + x) * bins + b];
      const double n = std::sqrt(sq + 1e-12);
      for (int y = by; y < std::min(by + 2, cy); ++y)
        for (int x = bx; x < std::min(bx + 2, cx); ++x)
          for (int b = 0; b < bins; ++b) h[(y * cx + x) * bins + b] /= n;
    }
  return h;
}

GrayImage random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& v : img.data) v = static_cast<float>(uniform01(rng));
  return img;
}

Codebook book_of(const std::vector<std::vector<float>>& centroids) {
  Codebook b;
  b.k = static_cast<int>(centroids.size());
  b.dim = static_cast<int>(centroids.front().size());
  for (const auto& c : centroids) b.centroids.insert(b.centroids.end(), c.begin(), c.end());
  return b;
}

double wcss(const std::vector<float>& samples, int dim, const Codebook& book) {
  double s = 0;
  for (std::size_t i = 0; i < samples.size() / dim; ++i) {
    const std::span<const float> v(samples.data() + i * dim, static_cast<std::size_t>(dim));
    const auto c = book.centroid(nearest_centroid(book, v));
    for (int d = 0; d < dim; ++d) s += (v[d] - c[d]) * (v[d] - c[d]);
  }
  return s;
}

}  // namespace

TEST_CASE("hog: constant image gives an all-zero descriptor") {
  const auto d = hog(GrayImage(16, 16, 0.7f));
  for (float v : d.values) CHECK(v == 0.0f);
}

TEST_CASE("hog: descriptor length is cells_y * cells_x * bins") {
  const auto d = hog(random_image(64, 64, 1), {8, 9});
  CHECK(d.size() == 8u * 8u * 9u);
  CHECK(d.cells_x == 8);
  // Sides that are not a multiple of the cell are padded up.
  CHECK(hog(random_image(65, 60, 1), {8, 9}).cells_x == 9);
  CHECK_THROWS_AS(hog(GrayImage{}), InvalidArgument);
  CHECK_THROWS_AS(hog(random_image(8, 8, 1), {4, 1}), InvalidArgument);
}

TEST_CASE("hog: a vertical step puts its mass in the orientation-0 bin") {
  GrayImage img(8, 8, 0.0f);
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) img.at(x, y) = 1.0f;
  const auto d = hog(img, {4, 9});
  const auto ref = hog_oracle(img, 4, 9);
  REQUIRE(d.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(d.values[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  double total = 0, bin0 = 0;
  for (int cy = 0; cy < d.cells_y; ++cy)
    for (int cx = 0; cx < d.cells_x; ++cx)
      for (int b = 0; b < 9; ++b) {
        total += d.at(cx, cy, b);
        if (b == 0) bin0 += d.at(cx, cy, b);
      }
  CHECK(bin0 == doctest::Approx(total));
}

TEST_CASE("hog matches the per-pixel oracle on random images") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto img = random_image(21, 19, s);
    const auto d = hog(img, {5, 7});
    const auto ref = hog_oracle(img, 5, 7);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(d.values[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("hog entries are nonnegative and each block has L2 norm at most 1") {
  const auto d = hog(random_image(48, 40, 3), {8, 9});
  for (float v : d.values) CHECK(v >= 0.0f);
  for (int by = 0; by < d.cells_y; by += 2)
    for (int bx = 0; bx < d.cells_x; bx += 2) {
      double sq = 0;
      for (int y = by; y < std::min(by + 2, d.cells_y); ++y)
        for (int x = bx; x < std::min(bx + 2, d.cells_x); ++x)
          for (int b = 0; b < d.bins; ++b) sq += d.at(x, y, b) * d.at(x, y, b);
      CHECK(std::sqrt(sq) <= 1.0 + 1e-5);
    }
}

TEST_CASE("hog is translation-covariant by whole normalisation blocks") {
  // Blocks are non-overlapping 2x2 cells, so a two-cell shift maps blocks
  // onto blocks and interior cells must agree exactly.
  const int cell = 4;
  GrayImage a(64, 64, 1.0f), b(64, 64, 1.0f);
  const auto pattern = random_image(24, 24, 7);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      a.at(16 + x, 16 + y) = pattern.at(x, y);
      b.at(16 + 2 * cell + x, 16 + 2 * cell + y) = pattern.at(x, y);
    }
  const auto da = hog(a, {cell, 9});
  const auto db = hog(b, {cell, 9});
  for (int cy = 2; cy < 12; ++cy)
    for (int cx = 2; cx < 12; ++cx)
      for (int k = 0; k < 9; ++k) CHECK(db.at(cx + 2, cy + 2, k) == doctest::Approx(da.at(cx, cy, k)).epsilon(1e-6));
}

TEST_CASE("hog_patches: 2x2 windows at every offset") {
  const auto d = hog(random_image(24, 16, 2), {8, 4});
  const auto p = hog_patches(d);
  CHECK(p.size() == static_cast<std::size_t>((d.cells_x - 1) * (d.cells_y - 1) * hog_patch_dim(4)));
  // Second window starts at cell (1, 0).
  for (int b = 0; b < 4; ++b) CHECK(p[16 + b] == d.at(1, 0, b));
}

TEST_CASE("kmeans: repeated distinct points are recovered exactly") {
  const std::vector<std::vector<float>> pts{{0, 0}, {5, 1}, {-3, 4}};
  std::vector<float> samples;
  for (int r = 0; r < 4; ++r)
    for (const auto& p : pts) samples.insert(samples.end(), p.begin(), p.end());
  const auto book = kmeans_fit(samples, 2, 3, 50, 1);
  std::set<std::vector<float>> got;
  for (int i = 0; i < 3; ++i) got.insert({book.centroid(i).begin(), book.centroid(i).end()});
  CHECK(got == std::set<std::vector<float>>(pts.begin(), pts.end()));
}

TEST_CASE("kmeans: {0, 0, 10, 10} with k = 2 gives centroids 0 and 10") {
  const std::vector<float> s{0, 0, 10, 10};
  const auto book = kmeans_fit(s, 1, 2, 20, 3);
  std::vector<float> c{book.centroids[0], book.centroids[1]};
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<float>{0, 10});
}

TEST_CASE("kmeans is deterministic, monotone and rejects too few samples") {
  Rng rng(4);
  std::vector<float> s(600);
  for (auto& v : s) v = static_cast<float>(uniform(rng, -1, 1));
  KMeansTrace trace;
  const auto a = kmeans_fit(s, 3, 8, 30, 9, &trace);
  const auto b = kmeans_fit(s, 3, 8, 30, 9);
  CHECK(a.centroids == b.centroids);
  REQUIRE(trace.objective.size() >= 2);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1] + 1e-9);
  CHECK(trace.objective.back() == doctest::Approx(wcss(s, 3, a)).epsilon(1e-4));
  std::set<std::vector<float>> distinct;
  for (int i = 0; i < a.k; ++i) distinct.insert({a.centroid(i).begin(), a.centroid(i).end()});
  CHECK(distinct.size() == 8u);
  CHECK_THROWS_AS(kmeans_fit(std::vector<float>{1, 2}, 1, 3, 10, 1), InvalidArgument);
}

TEST_CASE("bow_encode: hand counts and normalisation") {
  const auto book = book_of({{0, 0}, {10, 0}, {0, 10}});
  // Nearest centroids 0, 0, 2.
  const std::vector<float> patches{1, 1, -1, 0, 1, 9};
  const auto h = bow_encode_patches(patches, book);
  CHECK(h[0] == doctest::Approx(2.0 / 3));
  CHECK(h[1] == 0.0f);
  CHECK(h[2] == doctest::Approx(1.0 / 3));

  const auto four = book_of({{0}, {1}, {2}, {3}});
  const auto one_hot = bow_encode_patches(std::vector<float>{3, 3, 3}, four);
  CHECK(one_hot == BowHistogram{0, 0, 0, 1});
  const auto halves = bow_encode_patches(std::vector<float>{0, 1, 0, 1}, four);
  CHECK(halves == BowHistogram{0.5f, 0.5f, 0, 0});
  // Equidistant between 0 and 1: lowest index wins.
  CHECK(nearest_centroid(four, std::vector<float>{0.5f}) == 0);
  CHECK_THROWS_AS(bow_encode_patches(std::vector<float>{1, 2, 3}, book), InvalidArgument);
}

TEST_CASE("bow_encode of a real descriptor sums to one") {
  const auto d = hog(random_image(40, 40, 6), {8, 9});
  const auto patches = hog_patches(d);
  const auto book = kmeans_fit(patches, hog_patch_dim(9), 4, 10, 2);
  const auto h = bow_encode(d, book);
  double s = 0;
  for (float v : h) s += v;
  CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("baseline_rank: exact match first, ties by id, equals a sort oracle") {
  const std::vector<BowHistogram> two{{0, 2}, {0, 1}};
  const auto r = baseline_rank(BowHistogram{0, 0}, two, std::vector<std::string>{"far", "near"});
  CHECK(r[0].id == "near");
  CHECK(r[0].distance == doctest::Approx(1.0f));
  CHECK(r[1].distance == doctest::Approx(2.0f));

  Rng rng(10);
  std::vector<BowHistogram> corpus(50, BowHistogram(6));
  std::vector<std::string> ids;
  for (int i = 0; i < 50; ++i) {
    for (auto& v : corpus[i]) v = static_cast<float>(uniform_index(rng, 3));  // many ties
    char buf[8];
    std::snprintf(buf, sizeof buf, "i%02d", i);
    ids.push_back(buf);
  }
  const BowHistogram q = corpus[17];
  const auto ranked = baseline_rank(q, corpus, ids);
  std::vector<std::pair<double, std::string>> oracle;
  for (int i = 0; i < 50; ++i) {
    double s = 0;
    for (int d = 0; d < 6; ++d) s += (q[d] - corpus[i][d]) * (q[d] - corpus[i][d]);
    oracle.emplace_back(std::sqrt(s), ids[i]);
  }
  std::sort(oracle.begin(), oracle.end());
  REQUIRE(ranked.size() == 50u);
  for (int i = 0; i < 50; ++i) {
    CHECK(ranked[i].id == oracle[i].second);
    CHECK(ranked[i].distance == doctest::Approx(oracle[i].first));
    if (i) CHECK(ranked[i - 1].distance <= ranked[i].distance);
  }
  CHECK(ranked.front().distance == 0.0f);
  CHECK_THROWS_AS(baseline_rank(q, std::vector<BowHistogram>{}), InvalidArgument);
}

TEST_CASE("codebook save/load round-trips and detects corruption") {
  const auto book = kmeans_fit(std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7}, 2, 2, 5, 3);
  const auto path = std::filesystem::temp_directory_path() / "swire_test_codebook.swbow";
  save_codebook(book, path);
  const auto back = load_codebook(path);
  CHECK(back.k == book.k);
  CHECK(back.dim == book.dim);
  CHECK(back.seed == book.seed);
  CHECK(back.centroids == book.centroids);
  auto bytes = serialize_codebook(book);
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "SWBOW1");
  bytes.resize(bytes.size() - 3);
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  CHECK_THROWS_AS(load_codebook(path), FormatError);
  std::filesystem::remove(path);
}
