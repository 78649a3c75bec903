#include "swire/baseline/bow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "swire/simd/kernels.hpp"
#include "swire/util/binio.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

namespace swire::baseline {

namespace {

std::span<const float> row(std::span<const float> m, std::size_t i, std::size_t dim) {
  return m.subspan(i * dim, dim);
}

}  // namespace

Codebook kmeans_fit(std::span<const float> samples, int dim, int k, int iters, std::uint64_t seed,
                    KMeansTrace* trace) {
  if (dim < 1) throw InvalidArgument("kmeans: dimension must be >= 1");
  if (k < 2) throw InvalidArgument("kmeans: k must be >= 2");
  if (samples.size() % static_cast<std::size_t>(dim) != 0) {
    throw InvalidArgument("kmeans: sample buffer is not a multiple of the dimension");
  }
  const std::size_t n = samples.size() / dim;
  const std::size_t d = static_cast<std::size_t>(dim);
  if (n < static_cast<std::size_t>(k)) {
    throw InvalidArgument("kmeans: fewer samples (" + std::to_string(n) + ") than clusters (" +
                          std::to_string(k) + ")");
  }

  Codebook book{k, dim, seed, std::vector<float>(static_cast<std::size_t>(k) * d)};
  auto centroid = [&](int c) { return std::span<float>(book.centroids.data() + c * d, d); };

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = uniform_index(rng, n);
  for (int c = 0; c < k; ++c) {
    std::copy_n(samples.data() + pick * d, d, centroid(c).data());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = simd::squared_l2(row(samples, i, d), centroid(c));
      best_d2[i] = std::min(best_d2[i], d2);
      total += best_d2[i];
    }
    if (total <= 0.0) {
      throw InvalidArgument("kmeans: fewer distinct samples than clusters (k=" + std::to_string(k) + ")");
    }
    double r = uniform01(rng) * total;
    pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (best_d2[i] <= 0.0) continue;
      r -= best_d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == n) {  // rounding left r marginally positive
      for (std::size_t i = n; i-- > 0;) {
        if (best_d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
  }

  std::vector<int> assign(n, -1);
  std::vector<double> dist2(n);
  std::vector<double> sums(static_cast<std::size_t>(k) * d);
  std::vector<std::size_t> counts(k);
  int it = 0;
  for (; it < iters; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest_centroid(book, row(samples, i, d));
      dist2[i] = simd::squared_l2(row(samples, i, d), book.centroid(c));
      objective += dist2[i];
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (trace) trace->objective.push_back(objective);
    if (!changed) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = row(samples, i, d);
      double* acc = &sums[static_cast<std::size_t>(assign[i]) * d];
      for (std::size_t j = 0; j < d; ++j) acc[j] += s[j];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto cen = centroid(c);
      for (std::size_t j = 0; j < d; ++j) cen[j] = static_cast<float>(sums[c * d + j] / counts[c]);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<std::size_t>(
          std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
      std::copy_n(samples.data() + far * d, d, centroid(c).data());
      dist2[far] = 0.0;
    }
  }
  if (trace) trace->iterations = it;
  return book;
}

int nearest_centroid(const Codebook& book, std::span<const float> v) {
  int best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (int c = 0; c < book.k; ++c) {
    const float dd = simd::squared_l2(v, book.centroid(c));
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  return best;
}

BowHistogram bow_encode_patches(std::span<const float> patches, const Codebook& book) {
  const std::size_t d = static_cast<std::size_t>(book.dim);
  if (d == 0 || patches.size() % d != 0) {
    throw InvalidArgument("bow_encode: patch dimension does not match codebook dimension " +
                          std::to_string(book.dim));
  }
  BowHistogram hist(book.k, 0.0f);
  const std::size_t n = patches.size() / d;
  for (std::size_t i = 0; i < n; ++i) hist[nearest_centroid(book, patches.subspan(i * d, d))] += 1.0f;
  if (n > 0) {
    for (auto& v : hist) v /= static_cast<float>(n);
  }
  return hist;
}

BowHistogram bow_encode(const HogDescriptor& desc, const Codebook& book) {
  if (hog_patch_dim(desc.bins) != book.dim) {
    throw InvalidArgument("bow_encode: descriptor patch dimension " +
                          std::to_string(hog_patch_dim(desc.bins)) + " does not match codebook dimension " +
                          std::to_string(book.dim));
  }
  return bow_encode_patches(hog_patches(desc), book);
}

RankedResults baseline_rank(const BowHistogram& query, std::span<const BowHistogram> corpus,
                            std::span<const std::string> ids) {
  if (corpus.empty()) throw InvalidArgument("baseline_rank: empty corpus");
  if (!ids.empty() && ids.size() != corpus.size()) {
    throw InvalidArgument("baseline_rank: ids and corpus differ in length");
  }
  std::vector<std::pair<float, std::size_t>> scored(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].size() != query.size()) {
      throw InvalidArgument("baseline_rank: histogram length mismatch at corpus item " + std::to_string(i));
    }
    scored[i] = {std::sqrt(simd::squared_l2(query, corpus[i])), i};
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if (!ids.empty() && ids[a.second] != ids[b.second]) return ids[a.second] < ids[b.second];
    return a.second < b.second;
  });
  RankedResults out;
  out.reserve(scored.size());
  for (const auto& [dist, i] : scored) {
    out.push_back({ids.empty() ? std::to_string(i) : ids[i], dist});
  }
  return out;
}

std::vector<std::uint8_t> serialize_codebook(const Codebook& book) {
  binio::Writer w;
  w.bytes("SWBOW1");
  w.u32(static_cast<std::uint32_t>(book.k));
  w.u32(static_cast<std::uint32_t>(book.dim));
  w.u64(book.seed);
  w.f32s(book.centroids);
  return w.buffer();
}

void save_codebook(const Codebook& book, const std::filesystem::path& path) {
  binio::write_file(path, serialize_codebook(book));
}

Codebook load_codebook(const std::filesystem::path& path) {
  auto r = binio::Reader::from_file(path);
  r.expect_magic("SWBOW1", "codebook " + path.string());
  Codebook book;
  book.k = static_cast<int>(r.u32());
  book.dim = static_cast<int>(r.u32());
  book.seed = r.u64();
  if (book.k < 2 || book.dim < 1) throw FormatError("codebook " + path.string() + ": invalid k/dim");
  const std::size_t count = static_cast<std::size_t>(book.k) * book.dim;
  if (r.remaining() != count * 4) {
    throw FormatError("codebook " + path.string() + ": expected " + std::to_string(count) +
                      " centroid values, file holds " + std::to_string(r.remaining() / 4));
  }
  book.centroids.resize(count);
  r.f32s(book.centroids);
  for (const float v : book.centroids) {
    if (!std::isfinite(v)) throw FormatError("codebook " + path.string() + ": non-finite centroid");
  }
  return book;
}

HogDescriptor sketch_features(const GrayImage& sketch, const BaselineConfig& config) {
  return hog(imaging::resize(sketch, config.image_size, config.image_size), config.hog);
}

HogDescriptor screenshot_features(const GrayImage& screenshot, const BaselineConfig& config) {
  const auto small = imaging::resize(screenshot, config.image_size, config.image_size);
  return hog(imaging::canny(small, config.canny), config.hog);
}

Codebook fit_codebook(std::span<const HogDescriptor> descriptors, const BaselineConfig& config) {
  std::vector<float> all;
  for (const auto& d : descriptors) {
    const auto p = hog_patches(d);
    all.insert(all.end(), p.begin(), p.end());
  }
  const std::size_t dim = static_cast<std::size_t>(hog_patch_dim(config.hog.bins));
  std::size_t n = all.size() / dim;
  // Deterministic subsample keeps fitting time bounded on large corpora.
  if (n > config.max_samples) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, 1));
    for (std::size_t i = 0; i < config.max_samples; ++i) {
      std::swap(order[i], order[i + uniform_index(rng, n - i)]);
    }
    std::vector<float> picked;
    picked.reserve(config.max_samples * dim);
    for (std::size_t i = 0; i < config.max_samples; ++i) {
      picked.insert(picked.end(), all.begin() + order[i] * dim, all.begin() + (order[i] + 1) * dim);
    }
    all = std::move(picked);
    n = config.max_samples;
  }
  return kmeans_fit(all, static_cast<int>(dim), config.k, config.iters, config.seed);
}

}  // namespace swire::baseline
