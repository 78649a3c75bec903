#pragma once

// Central-difference gradient checks and naive double-precision forward
// oracles for every differentiable op. Inputs are drawn away from the
// kinks of relu, max-pool and hinge so finite differences are meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "swire/numerics/ops.hpp"
#include "swire/util/random.hpp"

namespace swire::testing {

using DT = numerics::BasicTensor<double>;
using DTape = numerics::BasicTape<double>;
using OpFn = std::function<DT(const std::vector<DT>&, DTape*)>;

inline DT random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return DT(std::move(shape), std::move(v), true);
}

// Values in +-[gap, 1]: never within `gap` of zero.
inline DT away_from_zero(Shape shape, Rng& rng, double gap) {
  DT t = random_tensor(std::move(shape), rng, gap, 1.0);
  for (auto& x : t.values()) x = uniform01(rng) < 0.5 ? -x : x;
  return t;
}

// Distinct values spaced by at least `gap`, shuffled.
inline DT distinct_values(Shape shape, Rng& rng, double gap) {
  const std::size_t n = shape_size(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (static_cast<double>(i) - n / 2.0) * gap * 1.5;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(v[i], v[uniform_index(rng, i + 1)]);
  return DT(std::move(shape), std::move(v), true);
}

// --- oracles -------------------------------------------------------------

inline std::vector<double> conv2d_ref(const DT& x, const DT& w, const DT& b) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3), o = w.dim(0);
  std::vector<double> out(n * o * h * wd);
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t oi = 0; oi < o; ++oi)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < wd; ++xx) {
          double s = b.values()[oi];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const long sy = static_cast<long>(y) + ky, sx = static_cast<long>(xx) + kx;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
                s += w.values()[((oi * c + ci) * 3 + (ky + 1)) * 3 + (kx + 1)] *
                     x.values()[((ni * c + ci) * h + sy) * wd + sx];
              }
          out[((ni * o + oi) * h + y) * wd + xx] = s;
        }
  return out;
}

inline std::vector<double> maxpool2_ref(const DT& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<double> out;
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t sy = 2 * y + dy, sx = 2 * xx + dx;
            if (sy < h && sx < w) m = std::max(m, x.values()[(p * h + sy) * w + sx]);
          }
        out.push_back(m);
      }
  return out;
}

inline std::vector<double> dense_ref(const DT& x, const DT& w, const DT& b) {
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0), in = w.dim(1), m = w.dim(0);
  std::vector<double> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i) {
      double s = b.values()[i];
      for (std::size_t j = 0; j < in; ++j) s += w.values()[i * in + j] * x.values()[r * in + j];
      out[r * m + i] = s;
    }
  return out;
}

// --- the check -----------------------------------------------------------

struct GradReport {
  // ||a - n|| / (||n|| + 1e-8) over each input's whole gradient.
  double max_rel_error = 0.0;
  // Per element, |a - n| / max(|a|, |n|, 1e-3).
  double max_elem_error = 0.0;
  double max_forward_error = 0.0;
  std::size_t checked = 0;
};

// Entries that cancel to nearly zero are dominated by the O(step^2)
// truncation term, so the per-element error is floored.
inline double elem_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

// Objective sum(r * f(inputs)) with fixed random r; compares the tape's
// gradient for every input element with a central difference.
inline GradReport grad_check(const OpFn& f, std::vector<DT> inputs, Rng& rng, double step = 1e-3) {
  GradReport rep;
  DTape tape;
  const DT out = f(inputs, &tape);
  std::vector<double> r(out.size());
  for (auto& v : r) v = uniform(rng, -1.0, 1.0);
  const DT rt(out.shape(), r);
  const DT loss = numerics::sum(numerics::mul(out, rt, &tape), &tape);
  tape.backward(loss);

  auto objective = [&]() {
    const DT o = f(inputs, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += r[i] * o.values()[i];
    return s;
  };
  for (auto& in : inputs) {
    if (!in.requires_grad()) continue;
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    double diff2 = 0.0, num2 = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      const double keep = in.values()[j];
      in.values()[j] = keep + step;
      const double up = objective();
      in.values()[j] = keep - step;
      const double down = objective();
      in.values()[j] = keep;
      const double numeric = (up - down) / (2.0 * step);
      rep.max_elem_error = std::max(rep.max_elem_error, elem_error(analytic[j], numeric));
      diff2 += (analytic[j] - numeric) * (analytic[j] - numeric);
      num2 += numeric * numeric;
      ++rep.checked;
    }
    rep.max_rel_error = std::max(rep.max_rel_error, std::sqrt(diff2) / (std::sqrt(num2) + 1e-8));
  }
  return rep;
}

struct OpCase {
  std::string name;
  std::function<std::vector<DT>(Rng&)> make_inputs;
  OpFn fn;
  // Independent forward values; empty function when the op is a plain
  // rearrangement checked elsewhere.
  std::function<std::vector<double>(const std::vector<DT>&)> oracle;
};

inline std::vector<OpCase> op_cases() {
  using namespace swire::numerics;
  std::vector<OpCase> cases;
  cases.push_back({"conv2d",
                   [](Rng& rng) {
                     return std::vector<DT>{random_tensor({2, 2, 5, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
                                            random_tensor({3}, rng)};
                   },
                   [](const std::vector<DT>& in, DTape* t) { return conv2d(in[0], in[1], in[2], t); },
                   [](const std::vector<DT>& in) { return conv2d_ref(in[0], in[1], in[2]); }});
  cases.push_back({"maxpool2",
                   [](Rng& rng) { return std::vector<DT>{distinct_values({2, 2, 5, 4}, rng, 0.01)}; },
                   [](const std::vector<DT>& in, DTape* t) { return maxpool2(in[0], t); },
                   [](const std::vector<DT>& in) { return maxpool2_ref(in[0]); }});
  cases.push_back({"dense",
                   [](Rng& rng) {
                     return std::vector<DT>{random_tensor({3, 7}, rng), random_tensor({5, 7}, rng),
                                            random_tensor({5}, rng)};
                   },
                   [](const std::vector<DT>& in, DTape* t) { return dense(in[0], in[1], in[2], t); },
                   [](const std::vector<DT>& in) { return dense_ref(in[0], in[1], in[2]); }});
  cases.push_back({"relu", [](Rng& rng) { return std::vector<DT>{away_from_zero({4, 6}, rng, 0.01)}; },
                   [](const std::vector<DT>& in, DTape* t) { return relu(in[0], t); },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (double v : in[0].values()) o.push_back(v > 0 ? v : 0.0);
                     return o;
                   }});
  cases.push_back({"reshape", [](Rng& rng) { return std::vector<DT>{random_tensor({2, 3, 4}, rng)}; },
                   [](const std::vector<DT>& in, DTape* t) { return reshape(in[0], {6, 4}, t); },
                   [](const std::vector<DT>& in) {
                     return std::vector<double>(in[0].values().begin(), in[0].values().end());
                   }});
  auto binary = [&](std::string name, std::function<DT(const DT&, const DT&, DTape*)> op,
                    std::function<double(double, double)> ref) {
    cases.push_back({std::move(name),
                     [](Rng& rng) { return std::vector<DT>{random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)}; },
                     [op](const std::vector<DT>& in, DTape* t) { return op(in[0], in[1], t); },
                     [ref](const std::vector<DT>& in) {
                       std::vector<double> o;
                       for (std::size_t i = 0; i < in[0].size(); ++i) o.push_back(ref(in[0].values()[i], in[1].values()[i]));
                       return o;
                     }});
  };
  binary("add", [](const DT& a, const DT& b, DTape* t) { return add(a, b, t); }, [](double a, double b) { return a + b; });
  binary("sub", [](const DT& a, const DT& b, DTape* t) { return sub(a, b, t); }, [](double a, double b) { return a - b; });
  binary("mul", [](const DT& a, const DT& b, DTape* t) { return mul(a, b, t); }, [](double a, double b) { return a * b; });
  cases.push_back({"mul_self", [](Rng& rng) { return std::vector<DT>{random_tensor({7}, rng)}; },
                   [](const std::vector<DT>& in, DTape* t) { return mul(in[0], in[0], t); },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (double v : in[0].values()) o.push_back(v * v);
                     return o;
                   }});
  cases.push_back({"scale", [](Rng& rng) { return std::vector<DT>{random_tensor({3, 4}, rng)}; },
                   [](const std::vector<DT>& in, DTape* t) { return scale(in[0], -2.5, t); },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (double v : in[0].values()) o.push_back(-2.5 * v);
                     return o;
                   }});
  cases.push_back({"sum", [](Rng& rng) { return std::vector<DT>{random_tensor({3, 4}, rng)}; },
                   [](const std::vector<DT>& in, DTape* t) { return sum(in[0], t); },
                   [](const std::vector<DT>& in) {
                     double s = 0;
                     for (double v : in[0].values()) s += v;
                     return std::vector<double>{s};
                   }});
  cases.push_back({"mean", [](Rng& rng) { return std::vector<DT>{random_tensor({3, 4}, rng)}; },
                   [](const std::vector<DT>& in, DTape* t) { return mean(in[0], t); },
                   [](const std::vector<DT>& in) {
                     double s = 0;
                     for (double v : in[0].values()) s += v;
                     return std::vector<double>{s / in[0].size()};
                   }});
  cases.push_back({"l2_norm_rows", [](Rng& rng) { return std::vector<DT>{away_from_zero({4, 6}, rng, 0.1)}; },
                   [](const std::vector<DT>& in, DTape* t) { return l2_norm_rows(in[0], t); },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (std::size_t r = 0; r < 4; ++r) {
                       double s = 0;
                       for (std::size_t c = 0; c < 6; ++c) s += in[0].values()[r * 6 + c] * in[0].values()[r * 6 + c];
                       o.push_back(std::sqrt(s));
                     }
                     return o;
                   }});
  cases.push_back({"hinge",
                   [](Rng& rng) {
                     // margin 0.2; keep values at least 0.01 away from it.
                     DT t = away_from_zero({10}, rng, 0.01);
                     for (auto& v : t.values()) v += 0.2;
                     return std::vector<DT>{t};
                   },
                   [](const std::vector<DT>& in, DTape* t) { return hinge(in[0], 0.2, t); },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (double v : in[0].values()) o.push_back(std::max(0.0, 0.2 - v));
                     return o;
                   }});
  cases.push_back({"gather_rows", [](Rng& rng) { return std::vector<DT>{random_tensor({4, 3}, rng)}; },
                   [](const std::vector<DT>& in, DTape* t) {
                     const std::vector<std::size_t> idx{2, 0, 2, 3};
                     return gather_rows(in[0], idx, t);
                   },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (std::size_t r : {2, 0, 2, 3})
                       for (std::size_t c = 0; c < 3; ++c) o.push_back(in[0].values()[r * 3 + c]);
                     return o;
                   }});
  cases.push_back({"normalize_rows", [](Rng& rng) { return std::vector<DT>{away_from_zero({3, 5}, rng, 0.1)}; },
                   [](const std::vector<DT>& in, DTape* t) { return normalize_rows(in[0], t); },
                   [](const std::vector<DT>& in) {
                     std::vector<double> o;
                     for (std::size_t r = 0; r < 3; ++r) {
                       double s = 0;
                       for (std::size_t c = 0; c < 5; ++c) s += in[0].values()[r * 5 + c] * in[0].values()[r * 5 + c];
                       for (std::size_t c = 0; c < 5; ++c) o.push_back(in[0].values()[r * 5 + c] / std::sqrt(s));
                     }
                     return o;
                   }});
  return cases;
}

// Forward against the oracle, then the gradient check.
inline GradReport check_case(const OpCase& c, std::uint64_t seed) {
  Rng rng(seed);
  auto inputs = c.make_inputs(rng);
  GradReport rep;
  if (c.oracle) {
    const DT out = c.fn(inputs, nullptr);
    const auto expect = c.oracle(inputs);
    if (expect.size() != out.size()) {
      rep.max_forward_error = std::numeric_limits<double>::infinity();
      return rep;
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
      rep.max_forward_error = std::max(rep.max_forward_error, std::abs(expect[i] - out.values()[i]));
    }
  }
  const GradReport g = grad_check(c.fn, std::move(inputs), rng);
  rep.max_rel_error = g.max_rel_error;
  rep.max_elem_error = g.max_elem_error;
  rep.checked = g.checked;
  return rep;
}

}  // namespace swire::testing
