#include "swire/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "swire/simd/kernels.hpp"

namespace swire {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

namespace numerics {

namespace {

// Row-major views for the convolution matrix products.
template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
void check_finite(const BasicTensor<T>& t, const char* op) {
  for (const T v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

template <class T>
bool wants_grad(BasicTape<T>* tape, std::initializer_list<const BasicTensor<T>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// Splits an image tensor into (batch, channels, height, width).
struct ImageDims {
  std::size_t n, c, h, w;
  bool batched;
};

template <class T>
ImageDims image_dims(const BasicTensor<T>& x, const char* op) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  throw ShapeError(std::string(op) + ": expected (C,H,W) or (N,C,H,W), got " +
                   shape_string(x.shape()));
}

// cols[(c*9 + ky*3 + kx) * hw + y*w + x] = in[c, y+ky-1, x+kx-1] (0 outside).
template <class T>
void im2col(const T* in, std::size_t c, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* plane = in + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = cols + (ci * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          T* row = dst + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(row, row + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + kx - 1;
            row[x] = (sx < 0 || sx >= static_cast<long>(w)) ? T(0) : src[sx];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, std::size_t c, std::size_t h, std::size_t w, T* out) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    T* plane = out + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = cols + (ci * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          T* dst = plane + sy * w;
          const T* row = src + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + kx - 1;
            if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += row[x];
          }
        }
      }
    }
  }
}

template <class T>
std::span<const T> cspan(const T* p, std::size_t n) {
  return {p, n};
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      BasicTape<T>* tape) {
  const ImageDims d = image_dims(x, "conv2d");
  if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
    throw ShapeError("conv2d: kernel must be (O, C, 3, 3), got " + shape_string(w.shape()));
  }
  if (w.dim(1) != d.c) {
    throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(d.c) +
                     ", kernel expects " + std::to_string(w.dim(1)));
  }
  const std::size_t o = w.dim(0);
  if (b.rank() != 1 || b.dim(0) != o) {
    throw ShapeError("conv2d: bias must be (" + std::to_string(o) + "), got " + shape_string(b.shape()));
  }
  const std::size_t k = d.c * 9;
  const std::size_t hw = d.h * d.w;
  Shape out_shape = d.batched ? Shape{d.n, o, d.h, d.w} : Shape{o, d.h, d.w};
  BasicTensor<T> out(out_shape);

  const T* xv = x.values().data();
  const T* wv = w.values().data();
  const T* bv = b.values().data();
  T* ov = out.values().data();

#pragma omp parallel
  {
    std::vector<T> cols(k * hw);
#pragma omp for schedule(static)
    for (long ni = 0; ni < static_cast<long>(d.n); ++ni) {
      im2col(xv + ni * d.c * hw, d.c, d.h, d.w, cols.data());
      MatMap<T> on(ov + ni * o * hw, o, hw);
      on.noalias() = CMatMap<T>(wv, o, k) * CMatMap<T>(cols.data(), k, hw);
      on.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bv, o);
    }
  }
  check_finite(out, "conv2d");

  if (wants_grad(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, w = w, b = b, out = out, d, o, k, hw]() mutable {
      const T* gout = out.grad().data();
      const T* xv = x.values().data();
      const T* wv = w.values().data();
      // Per-sample partial sums, reduced in sample order so results do not
      // depend on the thread count.
      const bool need_w = w.requires_grad();
      const bool need_b = b.requires_grad();
      const bool need_x = x.requires_grad();
      std::vector<T> dw_parts(need_w ? d.n * o * k : 0, T(0));
      std::vector<T> db_parts(need_b ? d.n * o : 0, T(0));
      std::span<T> dx = need_x ? x.ensure_grad() : std::span<T>();
#pragma omp parallel
      {
        std::vector<T> cols(k * hw);
        std::vector<T> dcols(need_x ? k * hw : 0);
#pragma omp for schedule(static)
        for (long ni = 0; ni < static_cast<long>(d.n); ++ni) {
          const T* gn = gout + ni * o * hw;
          if (need_b) {
            for (std::size_t oi = 0; oi < o; ++oi) {
              double s = 0.0;
              for (std::size_t p = 0; p < hw; ++p) s += gn[oi * hw + p];
              db_parts[ni * o + oi] = static_cast<T>(s);
            }
          }
          const CMatMap<T> g(gn, o, hw);
          if (need_w) {
            im2col(xv + ni * d.c * hw, d.c, d.h, d.w, cols.data());
            MatMap<T>(dw_parts.data() + ni * o * k, o, k).noalias() =
                g * CMatMap<T>(cols.data(), k, hw).transpose();
          }
          if (need_x) {
            MatMap<T>(dcols.data(), k, hw).noalias() = CMatMap<T>(wv, o, k).transpose() * g;
            col2im_add(dcols.data(), d.c, d.h, d.w, dx.data() + ni * d.c * hw);
          }
        }
      }
      if (need_w) {
        auto dw = w.ensure_grad();
        for (std::size_t ni = 0; ni < d.n; ++ni) {
          for (std::size_t i = 0; i < o * k; ++i) dw[i] += dw_parts[ni * o * k + i];
        }
      }
      if (need_b) {
        auto db = b.ensure_grad();
        for (std::size_t ni = 0; ni < d.n; ++ni) {
          for (std::size_t oi = 0; oi < o; ++oi) db[oi] += db_parts[ni * o + oi];
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x, BasicTape<T>* tape) {
  const ImageDims d = image_dims(x, "maxpool2");
  const std::size_t oh = (d.h + 1) / 2;
  const std::size_t ow = (d.w + 1) / 2;
  BasicTensor<T> out(d.batched ? Shape{d.n, d.c, oh, ow} : Shape{d.c, oh, ow});
  std::vector<std::uint32_t> argmax(out.size());
  const T* xv = x.values().data();
  T* ov = out.values().data();
  const std::size_t planes = d.n * d.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = xv + p * d.h * d.w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t best_idx = 0;
        bool found = false;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t sy = 2 * y + dy;
            const std::size_t sx = 2 * xo + dx;
            if (sy >= d.h || sx >= d.w) continue;  // -inf padding never wins
            const std::size_t idx = sy * d.w + sx;
            if (!found || in[idx] > best) {
              best = in[idx];
              best_idx = static_cast<std::uint32_t>(idx);
              found = true;
            }
          }
        }
        const std::size_t o_idx = p * oh * ow + y * ow + xo;
        ov[o_idx] = best;
        argmax[o_idx] = best_idx;
      }
    }
  }
  check_finite(out, "maxpool2");
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, out = out, argmax = std::move(argmax), d, oh, ow]() mutable {
      auto gx = x.ensure_grad();
      const auto gout = out.grad();
      for (std::size_t i = 0; i < gout.size(); ++i) {
        const std::size_t plane = i / (oh * ow);
        gx[plane * d.h * d.w + argmax[i]] += gout[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                     BasicTape<T>* tape) {
  if (w.rank() != 2) throw ShapeError("dense: weight must be (M, N), got " + shape_string(w.shape()));
  const std::size_t m = w.dim(0);
  const std::size_t n = w.dim(1);
  std::size_t batch;
  bool batched;
  if (x.rank() == 1) {
    batch = 1;
    batched = false;
  } else if (x.rank() == 2) {
    batch = x.dim(0);
    batched = true;
  } else {
    throw ShapeError("dense: input must be (N) or (B, N), got " + shape_string(x.shape()));
  }
  if (x.shape().back() != n) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " does not match weight " +
                     shape_string(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != m) {
    throw ShapeError("dense: bias must be (" + std::to_string(m) + "), got " + shape_string(b.shape()));
  }
  BasicTensor<T> out(batched ? Shape{batch, m} : Shape{m});
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  const T* bv = b.values().data();
  T* ov = out.values().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const auto xrow = cspan(xv + bi * n, n);
    for (std::size_t mi = 0; mi < m; ++mi) {
      ov[bi * m + mi] = simd::dot(cspan(wv + mi * n, n), xrow) + bv[mi];
    }
  }
  check_finite(out, "dense");
  if (wants_grad(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, w = w, b = b, out = out, batch, m, n]() mutable {
      const auto gout = out.grad();
      const T* xv = x.values().data();
      const T* wv = w.values().data();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          std::span<T> row = gx.subspan(bi * n, n);
          for (std::size_t mi = 0; mi < m; ++mi) {
            const T g = gout[bi * m + mi];
            if (g != T(0)) simd::axpy(g, cspan(wv + mi * n, n), row);
          }
        }
      }
      if (w.requires_grad()) {
        auto gw = w.ensure_grad();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const auto xrow = cspan(xv + bi * n, n);
          for (std::size_t mi = 0; mi < m; ++mi) {
            const T g = gout[bi * m + mi];
            if (g != T(0)) simd::axpy(g, xrow, gw.subspan(mi * n, n));
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          for (std::size_t mi = 0; mi < m; ++mi) gb[mi] += gout[bi * m + mi];
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x, BasicTape<T>* tape) {
  BasicTensor<T> out(x.shape());
  const auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  check_finite(out, "relu");
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, out = out]() mutable {
      auto gx = x.ensure_grad();
      const auto gout = out.grad();
      const auto xv = x.values();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xv[i] > T(0)) gx[i] += gout[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape, BasicTape<T>* tape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const auto xv = x.values();
  BasicTensor<T> out(std::move(shape), std::vector<T>(xv.begin(), xv.end()));
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, out = out]() mutable {
      auto gx = x.ensure_grad();
      const auto gout = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  check_finite(out, "add");
  if (wants_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a = a, b = b, out = out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  require_same_shape(a, b, "sub");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
  check_finite(out, "sub");
  if (wants_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a = a, b = b, out = out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  check_finite(out, "mul");
  if (wants_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a = a, b = b, out = out]() mutable {
      const auto g = out.grad();
      // Read both inputs before accumulating: a and b may alias (x * x).
      const std::vector<T> av(a.values().begin(), a.values().end());
      const std::vector<T> bv(b.values().begin(), b.values().end());
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor, BasicTape<T>* tape) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] * factor;
  check_finite(out, "scale");
  if (wants_grad(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record(out, [a = a, out = out, factor]() mutable {
      auto ga = a.ensure_grad();
      const auto g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a, BasicTape<T>* tape) {
  double s = 0.0;
  for (const T v : a.values()) s += v;
  auto out = BasicTensor<T>::scalar(static_cast<T>(s));
  check_finite(out, "sum");
  if (wants_grad(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record(out, [a = a, out = out]() mutable {
      auto ga = a.ensure_grad();
      const T g = out.grad()[0];
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a, BasicTape<T>* tape) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (const T v : a.values()) s += v;
  const double n = static_cast<double>(a.size());
  auto out = BasicTensor<T>::scalar(static_cast<T>(s / n));
  check_finite(out, "mean");
  if (wants_grad(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record(out, [a = a, out = out, n]() mutable {
      auto ga = a.ensure_grad();
      const T g = static_cast<T>(out.grad()[0] / n);
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> l2_norm_rows(const BasicTensor<T>& x, BasicTape<T>* tape, double eps) {
  std::size_t rows, cols;
  Shape out_shape;
  if (x.rank() == 1) {
    rows = 1;
    cols = x.dim(0);
  } else if (x.rank() == 2) {
    rows = x.dim(0);
    cols = x.dim(1);
    out_shape = {rows};
  } else {
    throw ShapeError("l2_norm_rows: expected (D) or (N, D), got " + shape_string(x.shape()));
  }
  BasicTensor<T> out(out_shape);
  std::vector<double> sq(rows);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = xv[r * cols + c];
      s += v * v;
    }
    sq[r] = s;
    out.values()[r] = static_cast<T>(std::sqrt(s));
  }
  check_finite(out, "l2_norm_rows");
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, out = out, sq = std::move(sq), rows, cols, eps]() mutable {
      auto gx = x.ensure_grad();
      const auto g = out.grad();
      const auto xv = x.values();
      for (std::size_t r = 0; r < rows; ++r) {
        const double k = static_cast<double>(g[r]) / std::sqrt(sq[r] + eps);
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += static_cast<T>(k * xv[r * cols + c]);
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> hinge(const BasicTensor<T>& x, T margin, BasicTape<T>* tape) {
  BasicTensor<T> out(x.shape());
  const auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out.values()[i] = std::max(T(0), margin - xv[i]);
  check_finite(out, "hinge");
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, out = out, margin]() mutable {
      auto gx = x.ensure_grad();
      const auto g = out.grad();
      const auto xv = x.values();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (margin - xv[i] > T(0)) gx[i] -= g[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> idx,
                           BasicTape<T>* tape) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expected (N, D), got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t cols = x.dim(1);
  BasicTensor<T> out(Shape{idx.size(), cols});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(x.values().data() + idx[r] * cols, cols, out.values().data() + r * cols);
  }
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    std::vector<std::size_t> rows(idx.begin(), idx.end());
    tape->record(out, [x = x, out = out, rows = std::move(rows), cols]() mutable {
      auto gx = x.ensure_grad();
      const auto g = out.grad();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) gx[rows[r] * cols + c] += g[r * cols + c];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> normalize_rows(const BasicTensor<T>& x, BasicTape<T>* tape, double eps) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("normalize_rows: expected (D) or (N, D), got " + shape_string(x.shape()));
  }
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t cols = x.shape().back();
  BasicTensor<T> out(x.shape());
  std::vector<double> norms(rows);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += static_cast<double>(xv[r * cols + c]) * xv[r * cols + c];
    norms[r] = std::sqrt(s + eps);
    for (std::size_t c = 0; c < cols; ++c) out.values()[r * cols + c] = static_cast<T>(xv[r * cols + c] / norms[r]);
  }
  check_finite(out, "normalize_rows");
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x = x, out = out, norms = std::move(norms), rows, cols]() mutable {
      auto gx = x.ensure_grad();
      const auto g = out.grad();
      const auto y = out.values();
      for (std::size_t r = 0; r < rows; ++r) {
        double gy = 0.0;
        for (std::size_t c = 0; c < cols; ++c) gy += static_cast<double>(g[r * cols + c]) * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += static_cast<T>((g[r * cols + c] - gy * y[r * cols + c]) / norms[r]);
        }
      }
    });
  }
  return out;
}

template <class T>
void sgd_step(std::span<BasicTensor<T>> params, T lr) {
  for (auto& p : params) {
    if (!p.has_grad()) throw Error("sgd_step: parameter has no gradient (was backward run?)");
  }
  for (auto& p : params) {
    auto g = p.grad();
    simd::axpy(-lr, std::span<const T>(g.data(), g.size()), p.values());
    p.zero_grad();
  }
}

template <class T>
void init_glorot_uniform(BasicTensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -bound, bound));
}

template <class T>
void init_he_uniform(BasicTensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -bound, bound));
}

#define SWIRE_INSTANTIATE_OPS(T)                                                                   \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                 const BasicTensor<T>&, BasicTape<T>*);                            \
  template BasicTensor<T> maxpool2(const BasicTensor<T>&, BasicTape<T>*);                          \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                BasicTape<T>*);                                                    \
  template BasicTensor<T> relu(const BasicTensor<T>&, BasicTape<T>*);                              \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape, BasicTape<T>*);                    \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);        \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);        \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);        \
  template BasicTensor<T> scale(const BasicTensor<T>&, T, BasicTape<T>*);                          \
  template BasicTensor<T> sum(const BasicTensor<T>&, BasicTape<T>*);                               \
  template BasicTensor<T> mean(const BasicTensor<T>&, BasicTape<T>*);                              \
  template BasicTensor<T> l2_norm_rows(const BasicTensor<T>&, BasicTape<T>*, double);              \
  template BasicTensor<T> hinge(const BasicTensor<T>&, T, BasicTape<T>*);                          \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, std::span<const std::size_t>,         \
                                      BasicTape<T>*);                                              \
  template BasicTensor<T> normalize_rows(const BasicTensor<T>&, BasicTape<T>*, double);                \
  template void sgd_step(std::span<BasicTensor<T>>, T);                                            \
  template void init_glorot_uniform(BasicTensor<T>&, std::size_t, std::size_t, Rng&);             \
  template void init_he_uniform(BasicTensor<T>&, std::size_t, Rng&);

SWIRE_INSTANTIATE_OPS(float)
SWIRE_INSTANTIATE_OPS(double)

#undef SWIRE_INSTANTIATE_OPS

}  // namespace numerics
}  // namespace swire
