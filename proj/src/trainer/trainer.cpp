#include "swire/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "swire/index/index.hpp"
#include "swire/numerics/ops.hpp"

namespace swire::trainer {

using namespace swire::numerics;

void TrainConfig::validate() const {
  if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2 so each anchor has an in-batch negative");
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw InvalidArgument("lr must be positive");
  if (!(lr_decay > 0.0f) || !std::isfinite(lr_decay)) throw InvalidArgument("lr_decay must be positive");
  if (!(margin > 0.0f) || !std::isfinite(margin)) throw InvalidArgument("margin must be positive");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (patience < 0) throw InvalidArgument("patience must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("validation_fraction must be in [0, 1)");
  }
}

Tensor triplet_loss(const Tensor& es, const Tensor& ep, const Tensor& en, float margin, Tape* tape) {
  if (!(margin > 0.0f)) throw InvalidArgument("triplet_loss: margin must be positive");
  if (es.shape() != ep.shape() || es.shape() != en.shape()) {
    throw ShapeError("triplet_loss: embedding shapes differ: " + shape_string(es.shape()) + ", " +
                     shape_string(ep.shape()) + ", " + shape_string(en.shape()));
  }
  for (const Tensor* t : {&es, &ep, &en}) {
    for (float v : t->values()) {
      if (!std::isfinite(v)) throw NumericError("triplet_loss: non-finite embedding");
    }
  }
  const Tensor d_pos = l2_norm_rows(sub(es, ep, tape), tape);
  const Tensor d_neg = l2_norm_rows(sub(es, en, tape), tape);
  return mean(add(d_pos, hinge(d_neg, margin, tape), tape), tape);
}

float triplet_loss(const Embedding& es, const Embedding& ep, const Embedding& en, float margin) {
  auto t = [](const Embedding& e) { return Tensor({kEmbeddingDim}, std::vector<float>(e.begin(), e.end())); };
  return triplet_loss(t(es), t(ep), t(en), margin).item();
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng) {
  if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2");
  if (n < 2) throw InvalidArgument("need at least 2 training pairs");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
  std::vector<std::vector<std::size_t>> batches;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += b) {
    batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + b));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

std::vector<Triplet> sample_batch(std::span<const std::string> ids, Rng& rng) {
  if (ids.size() < 2) throw InvalidArgument("sample_batch: a batch needs at least 2 pairs");
  std::vector<Triplet> out;
  out.reserve(ids.size());
  std::vector<std::size_t> candidates;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    candidates.clear();
    for (std::size_t c = 0; c < ids.size(); ++c) {
      if (ids[c] != ids[a]) candidates.push_back(c);
    }
    if (candidates.empty()) {
      throw InvalidArgument("sample_batch: every batch member shows example '" + ids[a] + "'");
    }
    out.push_back({a, a, candidates[uniform_index(rng, candidates.size())]});
  }
  return out;
}

Split split(const dataset::Manifest& manifest, const std::optional<std::string>& held_out) {
  std::set<std::string> designers;
  for (const auto& r : manifest.pairs) designers.insert(r.designer);
  if (designers.size() < 2) {
    throw InvalidArgument("split: need at least 2 designers, found " + std::to_string(designers.size()));
  }
  Split s;
  s.held_out_designer = held_out ? *held_out : *designers.rbegin();
  if (!designers.contains(s.held_out_designer)) {
    throw InvalidArgument("split: unknown designer '" + s.held_out_designer + "'");
  }
  std::set<std::string> test_apps;
  for (const auto& r : manifest.pairs) {
    if (r.designer == s.held_out_designer) {
      s.test.push_back(r);
      test_apps.insert(r.app);
    }
  }
  for (const auto& r : manifest.pairs) {
    if (r.designer == s.held_out_designer) continue;
    if (test_apps.contains(r.app)) {
      ++s.dropped;
    } else {
      s.train.push_back(r);
    }
  }
  return s;
}

void TrainData::push_back(std::string id, Tensor sketch, Tensor screenshot) {
  ids.push_back(std::move(id));
  sketches.push_back(std::move(sketch));
  screenshots.push_back(std::move(screenshot));
}

TrainData TrainData::subset(std::span<const std::size_t> idx) const {
  TrainData out;
  for (std::size_t i : idx) out.push_back(ids.at(i), sketches.at(i), screenshots.at(i));
  return out;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%03d.swenc", epoch);
  return buf;
}

namespace {

Tensor stack(const std::vector<Tensor>& images, std::span<const std::size_t> idx) {
  const Shape& one = images.at(idx[0]).shape();
  const std::size_t stride = shape_size(one);
  Tensor out({idx.size(), one[0], one[1], one[2]});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto v = images.at(idx[k]).values();
    if (v.size() != stride) throw ShapeError("training images differ in shape");
    std::copy(v.begin(), v.end(), out.values().begin() + k * stride);
  }
  return out;
}

std::vector<Tensor> parameters(encoder::EncoderPair& w) {
  auto p = w.sketch.tensors();
  const auto q = w.screenshot.tensors();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

}  // namespace

double validation_topk(const encoder::EncoderPair& weights, const TrainData& data, std::size_t k) {
  if (data.size() == 0) throw InvalidArgument("validation set is empty");
  const auto sketches = encoder::encode_batch(weights.sketch, data.sketches);
  const auto shots = encoder::encode_batch(weights.screenshot, data.screenshots);
  index::IndexBuilder builder;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (seen.insert(data.ids[i]).second) builder.add({data.ids[i], shots[i], {}, std::nullopt});
  }
  const auto idx = builder.build();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ranked = idx.query_full(sketches[i], k);
    hits += std::any_of(ranked.begin(), ranked.end(), [&](const auto& h) { return h.id == data.ids[i]; });
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(const TrainConfig& config, const encoder::EncoderPair& init, const TrainData& data,
                  const TrainData* validation, const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  result.weights = init.clone();
  if (config.epochs == 0) return result;
  if (data.size() < 2) throw InvalidArgument("train: need at least 2 training pairs");

  TrainData carved_train, carved_val;
  const TrainData* train_set = &data;
  if (!validation && config.validation_fraction > 0.0) {
    const auto n_val = static_cast<std::size_t>(std::lround(config.validation_fraction * data.size()));
    if (n_val >= 2 && data.size() - n_val >= 2) {
      Rng rng(derive_seed(config.seed, 0x7a1d));
      std::vector<std::size_t> order(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
      std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
      std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
      std::sort(val_idx.begin(), val_idx.end());
      std::sort(train_idx.begin(), train_idx.end());
      carved_val = data.subset(val_idx);
      carved_train = data.subset(train_idx);
      train_set = &carved_train;
      validation = &carved_val;
    }
  }

  std::ofstream csv;
  if (!config.loss_csv.empty()) {
    csv.open(config.loss_csv, std::ios::trunc);
    if (!csv) throw IoError("cannot write loss trace: " + config.loss_csv.string());
    csv << "epoch,step,loss,lr\n";
  }
  std::filesystem::path last_good;
  auto checkpoint = [&](int epoch) {
    if (config.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(config.checkpoint_dir);
    last_good = config.checkpoint_dir / checkpoint_name(epoch);
    encoder::save(result.weights, last_good);
  };
  checkpoint(0);

  auto& w = result.weights;
  auto params = parameters(w);
  Rng rng(config.seed);
  float lr = config.lr;
  double best_val = -1.0;
  int since_best = 0;
  std::optional<encoder::EncoderPair> best_weights;
  int step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = epoch_batches(train_set->size(), config.batch_size, rng);
    for (const auto& batch : batches) {
      std::vector<std::string> ids;
      for (std::size_t i : batch) ids.push_back(train_set->ids[i]);
      const auto triplets = sample_batch(ids, rng);
      std::vector<std::size_t> neg;
      for (const auto& t : triplets) neg.push_back(t.negative);
      double loss_value = 0.0;
      try {
        Tape tape;
        const Tensor es = encoder::forward(w.sketch, stack(train_set->sketches, batch), &tape);
        const Tensor ei = encoder::forward(w.screenshot, stack(train_set->screenshots, batch), &tape);
        const Tensor en = gather_rows(ei, neg, &tape);
        const Tensor loss = triplet_loss(es, ei, en, config.margin, &tape);
        loss_value = loss.item();
        tape.backward(loss);
        sgd_step<float>(params, lr);
        for (const auto& p : params) {
          for (float v : p.values()) {
            if (!std::isfinite(v)) throw NumericError("non-finite weight after update");
          }
        }
      } catch (const NumericError& e) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step) + ": " + e.what() +
                                   (last_good.empty() ? std::string() : "; last good checkpoint: " + last_good.string()),
                               last_good);
      }
      result.steps.push_back({epoch, step, loss_value, lr});
      if (csv) csv << epoch << ',' << step << ',' << loss_value << ',' << lr << '\n';
      epoch_loss += loss_value;
      ++step;
    }
    EpochStats stats{epoch, epoch_loss / static_cast<double>(batches.size()), -1.0, lr};
    if (validation) stats.val_top10 = validation_topk(w, *validation, 10);
    result.epochs.push_back(stats);
    if (csv) csv.flush();
    checkpoint(epoch);
    if (on_epoch) on_epoch(stats);
    lr *= config.lr_decay;

    if (!validation) {
      result.best_epoch = epoch;
      continue;
    }
    if (stats.val_top10 > best_val) {
      best_val = stats.val_top10;
      result.best_epoch = epoch;
      since_best = 0;
      if (config.restore_best) best_weights = w.clone();
    } else if (++since_best >= config.patience && config.patience > 0) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  if (best_weights) result.weights = std::move(*best_weights);
  return result;
}

}  // namespace swire::trainer
