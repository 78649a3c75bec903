#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "swire/util/error.hpp"

namespace swire {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape);

namespace numerics {

// Shared-handle tensor: copies alias the same storage, clone() deep-copies.
// A scalar has an empty shape and one value.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, bool requires_grad = false)
      : data_(std::make_shared<Data>()) {
    data_->value.assign(shape_size(shape), T(0));
    data_->shape = std::move(shape);
    data_->requires_grad = requires_grad;
  }
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : data_(std::make_shared<Data>()) {
    if (values.size() != shape_size(shape)) {
      throw ShapeError("tensor values (" + std::to_string(values.size()) +
                       ") do not match shape " + shape_string(shape));
    }
    data_->shape = std::move(shape);
    data_->value = std::move(values);
    data_->requires_grad = requires_grad;
  }

  static BasicTensor scalar(T v, bool requires_grad = false) {
    return BasicTensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t dim(std::size_t i) const { return data_->shape.at(i); }
  std::size_t size() const { return data_->value.size(); }

  std::span<T> values() { return data_->value; }
  std::span<const T> values() const { return data_->value; }
  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return data_->value[0];
  }

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }

  bool has_grad() const { return !data_->grad.empty() || size() == 0; }
  std::span<T> grad() {
    if (!has_grad()) throw Error("tensor has no gradient");
    return data_->grad;
  }
  std::span<const T> grad() const {
    if (!has_grad()) throw Error("tensor has no gradient");
    return data_->grad;
  }
  std::span<T> ensure_grad() {
    if (data_->grad.size() != size()) data_->grad.assign(size(), T(0));
    return data_->grad;
  }
  void zero_grad() {
    if (!data_->grad.empty()) std::fill(data_->grad.begin(), data_->grad.end(), T(0));
  }
  void drop_grad() {
    data_->grad.clear();
    data_->grad.shrink_to_fit();
  }

  bool same_as(const BasicTensor& other) const { return data_ == other.data_; }

  BasicTensor clone() const {
    return BasicTensor(data_->shape, data_->value, data_->requires_grad);
  }

 private:
  struct Data {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> data_;
};

// Ordered record of differentiable ops executed during one forward pass.
// Confined to a single thread.
template <class T>
class BasicTape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const BasicTensor<T>& output, BackwardFn fn) {
    entries_.push_back({output, std::move(fn)});
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  bool contains(const BasicTensor<T>& t) const {
    for (const auto& e : entries_) {
      if (e.output.same_as(t)) return true;
    }
    return false;
  }

  // Reverse-mode sweep from a scalar loss recorded on this tape. Gradients
  // accumulate (+=) into every requires_grad tensor; the tape is cleared.
  void backward(const BasicTensor<T>& loss) {
    if (loss.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    std::size_t last = entries_.size();
    for (std::size_t i = entries_.size(); i-- > 0;) {
      if (entries_[i].output.same_as(loss)) {
        last = i;
        break;
      }
    }
    if (last == entries_.size()) {
      throw Error("backward: loss is not on the tape (detached graph)");
    }
    for (std::size_t i = 0; i <= last; ++i) entries_[i].output.ensure_grad();
    BasicTensor<T> seed = loss;
    seed.ensure_grad()[0] += T(1);
    for (std::size_t i = last + 1; i-- > 0;) entries_[i].fn();
    // Intermediate activations no longer need their gradient buffers.
    for (std::size_t i = 0; i <= last; ++i) {
      if (!entries_[i].output.same_as(loss)) entries_[i].output.drop_grad();
    }
    entries_.clear();
  }

 private:
  struct Entry {
    BasicTensor<T> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

template <class T>
void backward(BasicTape<T>& tape, const BasicTensor<T>& loss) {
  tape.backward(loss);
}

}  // namespace numerics

using Tensor = numerics::BasicTensor<float>;
using Tape = numerics::BasicTape<float>;

}  // namespace swire
