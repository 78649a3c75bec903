#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swire/dataset/manifest.hpp"
#include "swire/encoder/encoder.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

namespace swire::trainer {

struct TrainConfig {
  int batch_size = 32;
  float lr = 1e-2f;
  // Multiplies lr after every epoch; 1 keeps it constant.
  float lr_decay = 1.0f;
  float margin = 0.2f;
  int epochs = 30;
  std::uint64_t seed = 7;
  // Stop once validation Top-10 has not improved for this many epochs; 0 never stops early.
  int patience = 5;
  // Share of the training examples held back for early stopping; 0 disables.
  double validation_fraction = 0.1;
  // Return the weights of the best validation epoch instead of the last.
  bool restore_best = true;
  // Per-epoch SWENC1 checkpoints, when set.
  std::filesystem::path checkpoint_dir;
  // Per-step loss trace (epoch,step,loss,lr), when set.
  std::filesystem::path loss_csv;

  void validate() const;
};

// Indices into the current batch. The positive is always the anchor's own
// screenshot.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// Mean over rows of ||es - ep|| + max(0, m - ||es - en||). Rank-1 inputs are
// a single triplet.
Tensor triplet_loss(const Tensor& es, const Tensor& ep, const Tensor& en, float margin, Tape* tape = nullptr);
float triplet_loss(const Embedding& es, const Embedding& ep, const Embedding& en, float margin);

// Shuffled partition of [0, n) into batches of batch_size. A final batch of
// one is folded into its predecessor so every batch has a negative.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng);

// One triplet per batch member. Each negative is drawn uniformly from the
// other members whose example id differs from the anchor's.
std::vector<Triplet> sample_batch(std::span<const std::string> batch_ids, Rng& rng);

struct Split {
  std::vector<dataset::PairRecord> train;
  std::vector<dataset::PairRecord> test;
  std::string held_out_designer;
  // Train-side pairs removed because their app also appears in test.
  std::size_t dropped = 0;
};

// Test = every pair of one designer (the last in sorted order unless named);
// training keeps the other designers' pairs whose app never appears in test.
Split split(const dataset::Manifest& manifest, const std::optional<std::string>& held_out = std::nullopt);

// Preprocessed tensors, parallel arrays.
struct TrainData {
  std::vector<std::string> ids;
  std::vector<Tensor> sketches;
  std::vector<Tensor> screenshots;

  std::size_t size() const { return ids.size(); }
  void push_back(std::string id, Tensor sketch, Tensor screenshot);
  TrainData subset(std::span<const std::size_t> idx) const;
};

struct StepLoss {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
  float lr = 0.0f;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  // Validation Top-10 accuracy; negative when there is no validation set.
  double val_top10 = -1.0;
  float lr = 0.0f;
};

struct TrainResult {
  encoder::EncoderPair weights;
  std::vector<StepLoss> steps;
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  bool stopped_early = false;
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::filesystem::path checkpoint)
      : NumericError(what), checkpoint_(std::move(checkpoint)) {}
  // Last good checkpoint, empty when checkpoints are disabled.
  const std::filesystem::path& checkpoint() const { return checkpoint_; }

 private:
  std::filesystem::path checkpoint_;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Plain SGD on the summed parameters of both branches. With a validation
// fraction and no explicit `validation`, the holdout is drawn from `data`.
// Throws TrainingDiverged if the loss turns non-finite.
TrainResult train(const TrainConfig& config, const encoder::EncoderPair& init, const TrainData& data,
                  const TrainData* validation = nullptr, const EpochCallback& on_epoch = {});

// Fraction of validation sketches whose screenshot ranks in the first k
// among all validation screenshots.
double validation_topk(const encoder::EncoderPair& weights, const TrainData& data, std::size_t k);

std::string checkpoint_name(int epoch);

}  // namespace swire::trainer
