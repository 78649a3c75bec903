#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swire/baseline/bow.hpp"
#include "swire/dataset/manifest.hpp"
#include "swire/index/ranked.hpp"
#include "swire/pipeline/pipeline.hpp"

namespace swire::eval {

// Share of queries whose truth id is among the first k hits.
double topk_accuracy(std::span<const RankedResults> rankings, std::span<const std::string> truth, std::size_t k);

struct MethodRow {
  std::string name;
  double top1 = 0.0;
  double top10 = 0.0;
};

struct EvalReport {
  std::vector<MethodRow> methods;  // chance, baseline, encoder
  std::size_t n = 0;
  std::map<std::string, std::string> fingerprints;

  const MethodRow& row(const std::string& name) const;
  std::string to_json() const;
  std::string to_text() const;
};

// Expected accuracy of a uniformly random ranking: k / n.
MethodRow chance_row(std::size_t corpus_size);

struct ChanceSimulation {
  std::size_t trials = 0;
  double top1 = 0.0;
  double top10 = 0.0;
  // Binomial standard deviation of each estimate around its expectation.
  double sigma1 = 0.0;
  double sigma10 = 0.0;
};

// Rankings drawn as uniform random permutations of the corpus.
ChanceSimulation simulate_chance(std::size_t corpus_size, std::size_t trials, std::uint64_t seed);

struct BaselineArtifacts {
  baseline::Codebook codebook;
  baseline::BaselineConfig config;
};

// Fits the BoW-HOG codebook on the sketches and screenshots of `records`.
BaselineArtifacts fit_baseline(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> records,
                               const baseline::BaselineConfig& config = {});

// Rankings of every test sketch against all distinct test screenshots.
std::vector<RankedResults> baseline_rankings(const dataset::Manifest& manifest,
                                             std::span<const dataset::PairRecord> test,
                                             const BaselineArtifacts& baseline);
std::vector<RankedResults> encoder_rankings(const dataset::Manifest& manifest,
                                            std::span<const dataset::PairRecord> test,
                                            const pipeline::Models& models, std::string* index_fingerprint = nullptr);

EvalReport run_eval(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> test,
                    const pipeline::Models& models, const BaselineArtifacts& baseline);

}  // namespace swire::eval
