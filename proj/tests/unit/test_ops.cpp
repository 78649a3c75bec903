#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "swire/numerics/ops.hpp"
#include "swire/util/error.hpp"

using namespace swire;
using namespace swire::numerics;
using swire::testing::DT;
using swire::testing::DTape;

TEST_CASE("every op matches its oracle and finite differences") {
  for (const auto& c : swire::testing::op_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto rep = swire::testing::check_case(c, seed);
      INFO(c.name << " seed " << seed);
      CHECK(rep.max_forward_error < 1e-12);
      CHECK(rep.max_rel_error < 1e-4);
      CHECK(rep.max_elem_error < 1e-3);
    }
  }
}

TEST_CASE("float and double instantiations agree on conv2d") {
  Rng rng(3);
  DT x = swire::testing::random_tensor({1, 2, 6, 6}, rng);
  DT w = swire::testing::random_tensor({2, 2, 3, 3}, rng);
  DT b = swire::testing::random_tensor({2}, rng);
  auto to_f = [](const DT& t) {
    return Tensor(t.shape(), std::vector<float>(t.values().begin(), t.values().end()));
  };
  const DT od = conv2d(x, w, b);
  const Tensor of = conv2d(to_f(x), to_f(w), to_f(b));
  for (std::size_t i = 0; i < od.size(); ++i) CHECK(of.values()[i] == doctest::Approx(od.values()[i]).epsilon(1e-5));
}

TEST_CASE("unbatched conv2d equals the batched result for one sample") {
  Rng rng(4);
  Tensor x({2, 5, 5}), w({3, 2, 3, 3}), b({3});
  for (auto* t : {&x, &w, &b})
    for (auto& v : t->values()) v = static_cast<float>(uniform(rng, -1, 1));
  const Tensor one = conv2d(x, w, b);
  const Tensor batched = conv2d(reshape(x, {1, 2, 5, 5}), w, b);
  CHECK(one.shape() == Shape{3, 5, 5});
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(one.values()[i] == batched.values()[i]);
}

TEST_CASE("maxpool2 pads odd extents and routes the gradient to the first maximum") {
  DT x({1, 3, 3}, {1, 5, 2, 5, 0, 3, 4, 4, 9}, true);
  DTape tape;
  DT y = maxpool2(x, &tape);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y.values()[0] == 5);
  CHECK(y.values()[1] == 3);
  CHECK(y.values()[2] == 4);
  CHECK(y.values()[3] == 9);
  tape.backward(sum(y, &tape));
  // Ties 5/5 and 4/4: first in row-major window order.
  const std::vector<double> expect{0, 1, 0, 0, 0, 1, 1, 0, 1};
  for (std::size_t i = 0; i < 9; ++i) CHECK(x.grad()[i] == expect[i]);
}

TEST_CASE("relu subgradient at zero is zero") {
  DT x({3}, {-1, 0, 2}, true);
  DTape tape;
  tape.backward(sum(relu(x, &tape), &tape));
  CHECK(x.grad()[0] == 0);
  CHECK(x.grad()[1] == 0);
  CHECK(x.grad()[2] == 1);
}

TEST_CASE("l2_norm_rows is exact at the origin with a finite zero gradient") {
  DT x({4}, {0, 0, 0, 0}, true);
  DTape tape;
  DT n = l2_norm_rows(x, &tape);
  CHECK(n.item() == 0.0);
  tape.backward(n);
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("shape errors name the op") {
  DT a({2, 3}), b({3, 2});
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_WITH_AS(dense(DT({4}), DT({2, 3}), DT({2})), doctest::Contains("dense"), ShapeError);
  CHECK_THROWS_AS(conv2d(DT({1, 4, 4}), DT({2, 2, 3, 3}), DT({2})), ShapeError);
  CHECK_THROWS_AS(reshape(a, {5}), ShapeError);
}

TEST_CASE("non-finite results raise NumericError") {
  DT a({1}, std::vector<double>{1e308});
  CHECK_THROWS_AS(scale(a, 1e10), NumericError);
}

TEST_CASE("backward requires a scalar loss that lives on the tape") {
  DT x({2}, {1, 2}, true);
  DTape tape;
  DT y = scale(x, 2.0, &tape);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  DT detached = sum(x);
  CHECK_THROWS_WITH(tape.backward(detached), doctest::Contains("not on the tape"));
}

TEST_CASE("without a tape nothing is recorded and no gradient is kept") {
  DT x({2}, {1, 2}, true);
  DT y = scale(x, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradients accumulate across uses of one tensor") {
  DT x({2}, {1.5, -2.0}, true);
  DTape tape;
  DT y = add(x, x, &tape);
  tape.backward(sum(y, &tape));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("sgd_step moves against the gradient and clears it") {
  Tensor p({2}, {1.0f, 2.0f}, true);
  p.ensure_grad()[0] = 0.5f;
  p.ensure_grad()[1] = -1.0f;
  std::vector<Tensor> ps{p};
  sgd_step<float>(ps, 0.1f);
  CHECK(p.values()[0] == doctest::Approx(0.95f));
  CHECK(p.values()[1] == doctest::Approx(2.1f));
  CHECK(p.grad()[0] == 0.0f);
  Tensor q({1}, {1.0f}, true);
  std::vector<Tensor> qs{q};
  CHECK_THROWS(sgd_step<float>(qs, 0.1f));
}

TEST_CASE("initialisers stay inside their bounds") {
  Rng rng(9);
  Tensor t({64, 32});
  init_glorot_uniform(t, 32, 64, rng);
  const double g = std::sqrt(6.0 / 96.0);
  for (float v : t.values()) CHECK(std::abs(v) <= g);
  init_he_uniform(t, 32, rng);
  const double h = std::sqrt(6.0 / 32.0);
  double maxabs = 0;
  for (float v : t.values()) maxabs = std::max(maxabs, static_cast<double>(std::abs(v)));
  CHECK(maxabs <= h);
  CHECK(maxabs > 0.9 * h);
}
