#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "swire/numerics/ops.hpp"
#include "swire/trainer/trainer.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

using namespace swire;
using namespace swire::trainer;

namespace {

Embedding filled(float v) {
  Embedding e{};
  e.fill(v);
  return e;
}

Embedding axis(float v, std::size_t i = 0) {
  Embedding e{};
  e[i] = v;
  return e;
}

Tensor row(const Embedding& e, bool grad = false) {
  return Tensor({64}, std::vector<float>(e.begin(), e.end()), grad);
}

encoder::EncoderConfig tiny_config() {
  encoder::EncoderConfig c;
  c.profile = "tiny";
  c.input_size = 32;
  c.block_filters = {4, 4, 8, 8, 8};
  c.fc_sizes = {32, 32, 64};
  return c;
}

Tensor pattern(const encoder::EncoderConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  const auto s = static_cast<std::size_t>(c.input_size);
  Tensor t({1, s, s});
  for (auto& v : t.values()) v = uniform01(rng) < 0.5 ? -1.0f : 1.0f;
  return t;
}

// Pair i lights up half i of the image, in both modalities.
TrainData separable_data(const encoder::EncoderConfig& c) {
  const auto s = static_cast<std::size_t>(c.input_size);
  TrainData d;
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor t({1, s, s});
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) t.values()[y * s + x] = ((x < s / 2) == (i == 0)) ? 1.0f : -1.0f;
    d.push_back("half" + std::to_string(i), t, t);
  }
  return d;
}

TrainData tiny_data(const encoder::EncoderConfig& c, int n) {
  TrainData d;
  for (int i = 0; i < n; ++i) {
    d.push_back("ex" + std::to_string(i), pattern(c, 10 + i), pattern(c, 100 + i));
  }
  return d;
}

dataset::PairRecord rec(std::string id, std::string app, std::string designer) {
  dataset::PairRecord r;
  r.id = std::move(id);
  r.app = std::move(app);
  r.designer = std::move(designer);
  r.screenshot = "s/" + r.id + ".png";
  r.sketch = "k/" + r.id + "-" + r.designer + ".png";
  return r;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("triplet loss: the three worked examples") {
  // es = ep and ||es - en|| = 0.5 >= m: both terms vanish.
  CHECK(triplet_loss(axis(0.0f), axis(0.0f), axis(0.5f), 0.2f) == 0.0f);
  // Everything collapsed to one point costs exactly the margin.
  CHECK(triplet_loss(filled(0.0f), filled(0.0f), filled(0.0f), 0.2f) == doctest::Approx(0.2f).epsilon(1e-6));
  // D+ = 1.0, D- = 0.1, m = 0.2 -> 1.0 + 0.1.
  CHECK(triplet_loss(axis(0.0f), axis(1.0f), axis(0.1f, 3), 0.2f) == doctest::Approx(1.1f).epsilon(1e-6));
}

TEST_CASE("triplet loss properties") {
  Rng rng(17);
  for (int t = 0; t < 200; ++t) {
    Embedding a{}, p{}, n{};
    for (std::size_t i = 0; i < 64; ++i) {
      a[i] = static_cast<float>(uniform(rng, -0.1, 0.1));
      p[i] = static_cast<float>(uniform(rng, -0.1, 0.1));
      n[i] = static_cast<float>(uniform(rng, -0.1, 0.1));
    }
    const float l = triplet_loss(a, p, n, 0.2f);
    CHECK(l >= 0.0f);
    // Positive term vanishes when the positive is the anchor.
    double dn = 0;
    for (std::size_t i = 0; i < 64; ++i) dn += (a[i] - n[i]) * static_cast<double>(a[i] - n[i]);
    CHECK(triplet_loss(a, a, n, 0.2f) == doctest::Approx(std::max(0.0, 0.2 - std::sqrt(dn))).epsilon(1e-5));
  }
  CHECK_THROWS_AS(triplet_loss(filled(NAN), filled(0), filled(0), 0.2f), NumericError);
  CHECK_THROWS_AS(triplet_loss(Tensor({3, 64}), Tensor({2, 64}), Tensor({3, 64}), 0.2f), ShapeError);
}

TEST_CASE("batched loss is the mean of per-row losses") {
  Rng rng(2);
  std::vector<float> s(3 * 64), p(3 * 64), n(3 * 64);
  for (auto* v : {&s, &p, &n})
    for (auto& x : *v) x = static_cast<float>(uniform(rng, -0.2, 0.2));
  const auto l = triplet_loss(Tensor({3, 64}, s), Tensor({3, 64}, p), Tensor({3, 64}, n), 0.2f);
  double expect = 0;
  for (int r = 0; r < 3; ++r) {
    Embedding a{}, b{}, c{};
    std::copy_n(s.begin() + r * 64, 64, a.begin());
    std::copy_n(p.begin() + r * 64, 64, b.begin());
    std::copy_n(n.begin() + r * 64, 64, c.begin());
    expect += triplet_loss(a, b, c, 0.2f);
  }
  CHECK(l.values()[0] == doctest::Approx(expect / 3).epsilon(1e-5));
}

TEST_CASE("hinge-inactive gradient with respect to the negative is zero") {
  const Embedding a = axis(0.0f), p = axis(0.3f, 1), n = axis(0.9f, 2);  // ||a - n|| = 0.9 > m
  Tape tape;
  Tensor es = row(a, true), ep = row(p, true), en = row(n, true);
  const Tensor loss = triplet_loss(es, ep, en, 0.2f, &tape);
  tape.backward(loss);
  for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(en.grad()[i]) <= 1e-6f);
  // Finite differences agree.
  for (std::size_t i : {0u, 2u, 7u}) {
    Embedding up = n, down = n;
    up[i] += 1e-3f;
    down[i] -= 1e-3f;
    const double fd = (triplet_loss(a, p, up, 0.2f) - triplet_loss(a, p, down, 0.2f)) / 2e-3;
    CHECK(std::abs(fd) <= 1e-6);
  }
  // Active hinge: the negative is pushed away along (n - a).
  const Embedding close = axis(0.1f, 2);
  Tape t2;
  Tensor en2 = row(close, true);
  Tensor es2 = row(a, true);
  t2.backward(triplet_loss(es2, row(p), en2, 0.2f, &t2));
  CHECK(en2.grad()[2] == doctest::Approx(-1.0f).epsilon(1e-4));
}

TEST_CASE("epoch_batches partitions the indices and never leaves a batch of one") {
  Rng rng(3);
  for (const std::size_t n : {2u, 5u, 32u, 33u, 64u, 65u, 100u}) {
    const auto batches = epoch_batches(n, 32, rng);
    std::set<std::size_t> seen;
    for (const auto& b : batches) {
      CHECK(b.size() >= 2u);
      for (auto i : b) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == n);
  }
  CHECK_THROWS_AS(epoch_batches(1, 32, rng), InvalidArgument);
}

TEST_CASE("sample_batch: batch of two pairs with each other") {
  Rng rng(1);
  const std::vector<std::string> ids{"a", "b"};
  for (int t = 0; t < 10; ++t) {
    const auto tr = sample_batch(ids, rng);
    REQUIRE(tr.size() == 2u);
    CHECK(tr[0].positive == 0u);
    CHECK(tr[0].negative == 1u);
    CHECK(tr[1].negative == 0u);
  }
  CHECK_THROWS_AS(sample_batch(std::vector<std::string>{"a"}, rng), InvalidArgument);
  CHECK_THROWS_AS(sample_batch(std::vector<std::string>{"a", "a"}, rng), InvalidArgument);
}

TEST_CASE("sample_batch: negatives are uniform over the other 32 members") {
  std::vector<std::string> ids;
  for (int i = 0; i < 33; ++i) ids.push_back("id" + std::to_string(i));
  Rng rng(99);
  std::vector<int> counts(33, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) ++counts[sample_batch(ids, rng)[0].negative];
  CHECK(counts[0] == 0);
  const double p = 1.0 / 32, sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (int i = 1; i < 33; ++i) {
    CHECK(std::abs(counts[i] - draws * p) <= 3 * sigma + 1);
    chi2 += (counts[i] - draws * p) * (counts[i] - draws * p) / (draws * p);
  }
  // 31 degrees of freedom; 61.1 is the 0.999 quantile.
  CHECK(chi2 < 61.1);
}

TEST_CASE("sample_batch never pairs an anchor with a screenshot of the same example") {
  Rng rng(4);
  const std::vector<std::string> ids{"x", "y", "x", "z", "y", "x"};
  for (int t = 0; t < 500; ++t) {
    for (const auto& tr : sample_batch(ids, rng)) {
      CHECK(tr.anchor == tr.positive);
      CHECK(ids[tr.negative] != ids[tr.anchor]);
    }
  }
}

TEST_CASE("split: two designers with disjoint apps") {
  dataset::Manifest m;
  m.pairs = {rec("e1", "a1", "A"), rec("e2", "a1", "A"), rec("e3", "a2", "B")};
  const auto s = split(m, std::string("B"));
  CHECK(s.train.size() == 2u);
  CHECK(s.test.size() == 1u);
  CHECK(s.test[0].id == "e3");
  CHECK(s.dropped == 0u);
  // Default: the last designer in sorted order.
  CHECK(split(m).held_out_designer == "B");
}

TEST_CASE("split: a shared app drops exactly that app's training pairs") {
  dataset::Manifest m;
  m.pairs = {rec("p1", "x", "A"), rec("p2", "y", "A"), rec("p3", "y", "A"),
             rec("p4", "y", "B"), rec("p5", "z", "B"), rec("p6", "x", "C")};
  const auto s = split(m, std::string("B"));
  std::set<std::string> train, test;
  for (const auto& r : s.train) train.insert(r.id);
  for (const auto& r : s.test) test.insert(r.id);
  CHECK(train == std::set<std::string>{"p1", "p6"});
  CHECK(test == std::set<std::string>{"p4", "p5"});
  CHECK(s.dropped == 2u);
}

TEST_CASE("split property: designers and apps are disjoint on random manifests") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    dataset::Manifest m;
    const int n = 10 + static_cast<int>(uniform_index(rng, 40));
    for (int i = 0; i < n; ++i) {
      m.pairs.push_back(rec("e" + std::to_string(i), "app" + std::to_string(uniform_index(rng, 8)),
                            "d" + std::to_string(i < 2 ? i : uniform_index(rng, 4))));
    }
    const auto s = split(m);
    std::set<std::string> test_apps, test_designers;
    for (const auto& r : s.test) {
      test_apps.insert(r.app);
      test_designers.insert(r.designer);
    }
    CHECK(test_designers.size() == 1u);
    for (const auto& r : s.train) {
      CHECK(test_apps.count(r.app) == 0u);
      CHECK(test_designers.count(r.designer) == 0u);
    }
    CHECK(s.train.size() + s.test.size() + s.dropped == m.pairs.size());
  }
}

TEST_CASE("split rejects a single designer and unknown held-out names") {
  dataset::Manifest m;
  m.pairs = {rec("e1", "a", "A"), rec("e2", "b", "A")};
  CHECK_THROWS_AS(split(m), InvalidArgument);
  m.pairs.push_back(rec("e3", "c", "B"));
  CHECK_THROWS_AS(split(m, std::string("Q")), InvalidArgument);
}

TEST_CASE("train config defaults and validation") {
  const TrainConfig c;
  CHECK(c.batch_size == 32);
  CHECK(c.lr == doctest::Approx(1e-2f));
  CHECK(c.margin == doctest::Approx(0.2f));
  TrainConfig bad;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = TrainConfig{};
  bad.margin = 0.0f;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = TrainConfig{};
  bad.patience = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("zero epochs returns the initial weights") {
  const auto c = tiny_config();
  const auto init = encoder::build(c, 1);
  TrainConfig tc;
  tc.epochs = 0;
  const auto res = train(tc, init, tiny_data(c, 4));
  CHECK(encoder::serialize(res.weights) == encoder::serialize(init));
}

TEST_CASE("training is deterministic per seed and leaves the init untouched") {
  const auto c = tiny_config();
  const auto init = encoder::build(c, 2);
  const auto before = encoder::serialize(init);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.validation_fraction = 0.0;
  const auto data = tiny_data(c, 8);
  const auto a = train(tc, init, data);
  const auto b = train(tc, init, data);
  CHECK(encoder::serialize(a.weights) == encoder::serialize(b.weights));
  CHECK(encoder::serialize(init) == before);
  CHECK(a.steps.size() == 4u);
}

TEST_CASE("a 2-pair separable set is driven to near-zero loss within 200 steps") {
  const auto c = encoder::EncoderConfig::desk();
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 2;
  tc.validation_fraction = 0.0;
  const auto res = train(tc, encoder::build(c, 3), separable_data(c));
  REQUIRE(res.steps.size() == 200u);
  // The unsquared positive distance keeps plain SGD jittering around zero, so
  // "zero" means a small fraction of the margin over the final steps.
  double tail = 0;
  for (std::size_t i = 190; i < 200; ++i) tail += res.steps[i].loss;
  tail /= 10;
  MESSAGE("mean loss over the last 10 steps: " << tail);
  CHECK(tail < 0.25 * tc.margin);
  CHECK(tail < 0.25 * res.steps.front().loss);
}

TEST_CASE("loss CSV and per-epoch checkpoints are written") {
  const auto c = tiny_config();
  const auto dir = fresh_dir("swire_test_train");
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.validation_fraction = 0.0;
  tc.checkpoint_dir = dir / "ck";
  tc.loss_csv = dir / "loss.csv";
  const auto res = train(tc, encoder::build(c, 4), tiny_data(c, 8));
  for (int e = 0; e <= 3; ++e) CHECK(std::filesystem::exists(tc.checkpoint_dir / checkpoint_name(e)));
  CHECK(checkpoint_name(7) == "epoch-007.swenc");
  std::ifstream f(tc.loss_csv);
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,step,loss,lr");
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == static_cast<int>(res.steps.size()));
  // The last checkpoint holds the returned weights.
  CHECK(encoder::serialize(encoder::load(tc.checkpoint_dir / checkpoint_name(3))) ==
        encoder::serialize(res.weights));
  std::filesystem::remove_all(dir);
}

TEST_CASE("divergence aborts with the last good checkpoint") {
  const auto c = tiny_config();
  const auto dir = fresh_dir("swire_test_diverge");
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 4;
  tc.lr = 1e30f;
  tc.validation_fraction = 0.0;
  tc.checkpoint_dir = dir;
  try {
    train(tc, encoder::build(c, 5), tiny_data(c, 8));
    FAIL("training should have diverged");
  } catch (const TrainingDiverged& e) {
    CHECK_FALSE(e.checkpoint().empty());
    CHECK(std::filesystem::exists(e.checkpoint()));
    CHECK_NOTHROW(encoder::load(e.checkpoint()));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("early stopping restores the best validation epoch") {
  const auto c = tiny_config();
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 4;
  tc.patience = 2;
  tc.validation_fraction = 0.25;
  const auto res = train(tc, encoder::build(c, 6), tiny_data(c, 16));
  REQUIRE_FALSE(res.epochs.empty());
  double best = -1;
  for (const auto& e : res.epochs) {
    CHECK(e.val_top10 >= 0.0);
    best = std::max(best, e.val_top10);
  }
  CHECK(res.epochs[res.best_epoch - 1].val_top10 == best);
  if (res.stopped_early) CHECK(static_cast<int>(res.epochs.size()) < tc.epochs);
}

TEST_CASE("patience 0 runs every epoch") {
  const auto c = tiny_config();
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 4;
  tc.patience = 0;
  tc.validation_fraction = 0.25;
  const auto res = train(tc, encoder::build(c, 6), tiny_data(c, 16));
  CHECK(res.epochs.size() == 6);
  CHECK_FALSE(res.stopped_early);
}
