#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "swire/numerics/tensor.hpp"
#include "swire/util/random.hpp"

// Differentiable operations. Each takes an optional tape; when it is
// non-null and any input requires a gradient, the op records its backward
// step and the output requires a gradient too. Every op throws NumericError
// if it produces a non-finite value.
//
// Image tensors are (C, H, W) or batched (N, C, H, W); vectors are (D) or
// batched (N, D).

namespace swire::numerics {

// 3x3 cross-correlation, zero padding 1, stride 1. w: (O, C, 3, 3), b: (O).
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      BasicTape<T>* tape = nullptr);

// 2x2 max, stride 2. Odd extents are padded right/bottom with -inf.
// Gradient goes to the first maximal element in row-major window order.
template <class T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);

// w . x + b. w: (M, N), b: (M).
template <class T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                     BasicTape<T>* tape = nullptr);

// max(0, v); the subgradient at 0 is 0.
template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);

// Same values, new shape of equal size.
template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape, BasicTape<T>* tape = nullptr);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor, BasicTape<T>* tape = nullptr);

// Reductions to a scalar. Accumulation is carried out in double.
template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a, BasicTape<T>* tape = nullptr);

// Euclidean norm of each row of (N, D) -> (N); a rank-1 input gives a
// scalar. The value is the exact sqrt(sum v^2); the gradient uses
// v / sqrt(sum v^2 + eps) so it stays finite (and zero) at the origin.
template <class T>
BasicTensor<T> l2_norm_rows(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr,
                            double eps = 1e-12);

// max(0, margin - v) elementwise.
template <class T>
BasicTensor<T> hinge(const BasicTensor<T>& x, T margin, BasicTape<T>* tape = nullptr);

// Rows of (N, D) selected by index -> (len(idx), D).
template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> idx,
                           BasicTape<T>* tape = nullptr);

// p <- p - lr * grad(p), then grad zeroed. Throws if a gradient is missing.
template <class T>
void sgd_step(std::span<BasicTensor<T>> params, T lr);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <class T>
void init_glorot_uniform(BasicTensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Uniform in +-sqrt(6 / fan_in); keeps activation variance through ReLU.
template <class T>
void init_he_uniform(BasicTensor<T>& t, std::size_t fan_in, Rng& rng);

}  // namespace swire::numerics

namespace swire::numerics {

// Each row of (N, D) (or a single (D) vector) divided by its Euclidean norm.
template <class T>
BasicTensor<T> normalize_rows(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr, double eps = 1e-12);

}  // namespace swire::numerics
