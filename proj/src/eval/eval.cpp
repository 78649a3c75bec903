#include "swire/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "swire/imaging/imaging.hpp"
#include "swire/util/binio.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

namespace swire::eval {

double topk_accuracy(std::span<const RankedResults> rankings, std::span<const std::string> truth, std::size_t k) {
  if (rankings.size() != truth.size()) {
    throw InvalidArgument("topk_accuracy: " + std::to_string(rankings.size()) + " rankings but " +
                          std::to_string(truth.size()) + " truth ids");
  }
  if (rankings.empty()) throw InvalidArgument("topk_accuracy: no queries");
  if (k < 1) throw InvalidArgument("topk_accuracy: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    hits += std::any_of(r.begin(), end, [&](const RankedHit& h) { return h.id == truth[q]; });
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

const MethodRow& EvalReport::row(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.name == name) return m;
  }
  throw InvalidArgument("report has no method '" + name + "'");
}

std::string EvalReport::to_json() const {
  nlohmann::json doc;
  doc["methods"] = nlohmann::json::array();
  for (const auto& m : methods) doc["methods"].push_back({{"name", m.name}, {"top1", m.top1}, {"top10", m.top10}});
  doc["n"] = n;
  doc["fingerprints"] = fingerprints;
  return doc.dump(2);
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %9s %9s\n", "Method", "Top-1", "Top-10");
  out << line;
  for (const auto& m : methods) {
    std::snprintf(line, sizeof line, "%-10s %8.3f%% %8.3f%%\n", m.name.c_str(), 100.0 * m.top1, 100.0 * m.top10);
    out << line;
  }
  out << "test set: " << n << " pairs\n";
  for (const auto& [what, fp] : fingerprints) out << what << ": " << fp << "\n";
  return out.str();
}

MethodRow chance_row(std::size_t corpus_size) {
  if (corpus_size == 0) throw InvalidArgument("chance_row: empty corpus");
  const double n = static_cast<double>(corpus_size);
  return {"chance", 1.0 / n, std::min(10.0, n) / n};
}

ChanceSimulation simulate_chance(std::size_t corpus_size, std::size_t trials, std::uint64_t seed) {
  if (corpus_size == 0 || trials == 0) throw InvalidArgument("simulate_chance: corpus and trials must be nonzero");
  Rng rng(seed);
  std::vector<std::size_t> order(corpus_size);
  std::size_t hit1 = 0, hit10 = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < corpus_size; ++i) order[i] = i;
    for (std::size_t i = corpus_size - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
    // Item 0 plays the ground truth.
    const auto rank = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin());
    hit1 += rank < 1;
    hit10 += rank < 10;
  }
  ChanceSimulation s;
  s.trials = trials;
  s.top1 = static_cast<double>(hit1) / trials;
  s.top10 = static_cast<double>(hit10) / trials;
  const auto expect = chance_row(corpus_size);
  s.sigma1 = std::sqrt(expect.top1 * (1.0 - expect.top1) / trials);
  s.sigma10 = std::sqrt(expect.top10 * (1.0 - expect.top10) / trials);
  return s;
}

namespace {

struct TestImages {
  std::vector<std::string> truth;         // per query
  std::vector<GrayImage> sketches;        // per query
  std::vector<std::string> corpus_ids;    // distinct screenshots
  std::vector<GrayImage> screenshots;
};

TestImages load_test(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> test) {
  if (test.empty()) throw InvalidArgument("evaluation needs a nonempty test set");
  TestImages t;
  std::set<std::string> seen;
  for (const auto& r : test) {
    GrayImage shot = dataset::load_screenshot(manifest, r);
    t.truth.push_back(r.id);
    t.sketches.push_back(dataset::load_sketch(manifest, r, shot.width, shot.height));
    if (seen.insert(r.id).second) {
      t.corpus_ids.push_back(r.id);
      t.screenshots.push_back(std::move(shot));
    }
  }
  return t;
}

}  // namespace

BaselineArtifacts fit_baseline(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> records,
                               const baseline::BaselineConfig& config) {
  std::vector<baseline::HogDescriptor> descriptors;
  for (const auto& r : records) {
    const GrayImage shot = dataset::load_screenshot(manifest, r);
    descriptors.push_back(baseline::sketch_features(dataset::load_sketch(manifest, r, shot.width, shot.height), config));
    descriptors.push_back(baseline::screenshot_features(shot, config));
  }
  return {baseline::fit_codebook(descriptors, config), config};
}

std::vector<RankedResults> baseline_rankings(const dataset::Manifest& manifest,
                                             std::span<const dataset::PairRecord> test,
                                             const BaselineArtifacts& b) {
  const TestImages t = load_test(manifest, test);
  std::vector<baseline::BowHistogram> corpus;
  for (const auto& shot : t.screenshots) {
    corpus.push_back(baseline::bow_encode(baseline::screenshot_features(shot, b.config), b.codebook));
  }
  std::vector<RankedResults> out;
  for (const auto& sketch : t.sketches) {
    const auto q = baseline::bow_encode(baseline::sketch_features(sketch, b.config), b.codebook);
    out.push_back(baseline::baseline_rank(q, corpus, t.corpus_ids));
  }
  return out;
}

std::vector<RankedResults> encoder_rankings(const dataset::Manifest& manifest,
                                            std::span<const dataset::PairRecord> test,
                                            const pipeline::Models& models, std::string* index_fingerprint) {
  const TestImages t = load_test(manifest, test);
  std::vector<index::IndexedItem> items;
  const auto& sh = models.full.screenshot;
  std::vector<Tensor> inputs;
  for (const auto& shot : t.screenshots) inputs.push_back(encoder::preprocess(shot, sh.config));
  const auto emb = encoder::encode_batch(sh, inputs);
  for (std::size_t i = 0; i < emb.size(); ++i) items.push_back({t.corpus_ids[i], emb[i], {}, std::nullopt});
  const auto idx = index::Index::build(std::move(items));
  if (index_fingerprint) *index_fingerprint = idx.fingerprint();

  inputs.clear();
  for (const auto& sketch : t.sketches) inputs.push_back(encoder::preprocess(sketch, models.full.sketch.config));
  const auto queries = encoder::encode_batch(models.full.sketch, inputs);
  std::vector<RankedResults> out(queries.size());
#pragma omp parallel for schedule(static)
  for (std::size_t q = 0; q < queries.size(); ++q) out[q] = idx.query_full(queries[q], idx.size());
  return out;
}

EvalReport run_eval(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> test,
                    const pipeline::Models& models, const BaselineArtifacts& baseline) {
  EvalReport report;
  std::vector<std::string> truth;
  for (const auto& r : test) truth.push_back(r.id);
  std::set<std::string> distinct(truth.begin(), truth.end());
  report.n = test.size();

  report.methods.push_back(chance_row(distinct.size()));

  const auto base = baseline_rankings(manifest, test, baseline);
  report.methods.push_back({"bow-hog", topk_accuracy(base, truth, 1), topk_accuracy(base, truth, 10)});

  std::string index_fp;
  const auto enc = encoder_rankings(manifest, test, models, &index_fp);
  report.methods.push_back({"encoder", topk_accuracy(enc, truth, 1), topk_accuracy(enc, truth, 10)});

  report.fingerprints["weights"] = encoder::fingerprint(models.full);
  report.fingerprints["codebook"] = binio::hex32(binio::crc32(baseline::serialize_codebook(baseline.codebook)));
  report.fingerprints["index"] = index_fp;
  return report;
}

}  // namespace swire::eval
