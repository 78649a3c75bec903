#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "swire/baseline/hog.hpp"
#include "swire/imaging/imaging.hpp"
#include "swire/index/ranked.hpp"

namespace swire::baseline {

struct Codebook {
  int k = 0;
  int dim = 0;
  std::uint64_t seed = 0;
  std::vector<float> centroids;  // k * dim, row-major

  std::span<const float> centroid(int i) const {
    return {centroids.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
};

// Within-cluster sum of squares after each assignment step.
struct KMeansTrace {
  std::vector<double> objective;
  int iterations = 0;
};

// k-means++ seeding then Lloyd iterations until `iters` or a stable
// assignment. Empty clusters are reseeded to the sample farthest from its
// centroid. `samples` is row-major n * dim.
Codebook kmeans_fit(std::span<const float> samples, int dim, int k, int iters, std::uint64_t seed,
                    KMeansTrace* trace = nullptr);

// Index of the nearest centroid, ties to the lowest index.
int nearest_centroid(const Codebook& book, std::span<const float> v);

using BowHistogram = std::vector<float>;

// Patch-to-word counts, L1-normalised (all zeros when there are no patches).
BowHistogram bow_encode(const HogDescriptor& desc, const Codebook& book);
BowHistogram bow_encode_patches(std::span<const float> patches, const Codebook& book);

// Ascending Euclidean distance. Hits are identified by ids[i] when given,
// otherwise by the decimal corpus index; ties fall back to the corpus index.
RankedResults baseline_rank(const BowHistogram& query, std::span<const BowHistogram> corpus,
                            std::span<const std::string> ids = {});

// "SWBOW1", u32 k, u32 dim, u64 seed, k*dim f32, all little-endian.
void save_codebook(const Codebook& book, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_codebook(const Codebook& book);

struct BaselineConfig {
  int image_size = 128;
  HogParams hog;
  imaging::CannyParams canny;
  int k = 256;
  int iters = 50;
  std::size_t max_samples = 20000;
  std::uint64_t seed = 7;
};

// Screenshots go through Canny before HOG; sketches are already line
// drawings and go straight to HOG.
HogDescriptor sketch_features(const GrayImage& sketch, const BaselineConfig& config);
HogDescriptor screenshot_features(const GrayImage& screenshot, const BaselineConfig& config);

Codebook fit_codebook(std::span<const HogDescriptor> descriptors, const BaselineConfig& config);

}  // namespace swire::baseline
