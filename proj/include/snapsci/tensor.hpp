#pragma once

// Dense N-D tensor with a reverse-mode gradient tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape hand gradients back to the parameters a model owns. Use
// clone() for an independent copy.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "snapsci/error.hpp"

namespace snapsci {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : s_(std::make_shared<Storage>()) {
    s_->shape = std::move(shape);
    s_->data.assign(shape_numel(s_->shape), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : s_(std::make_shared<Storage>()) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " elements");
    }
    s_->shape = std::move(shape);
    s_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  std::vector<T>& values() { return s_->data; }
  const std::vector<T>& values() const { return s_->data; }

  T item() const {
    if (numel() != 1) throw ContractError("item(): tensor " + shape_str(shape()) + " is not a scalar");
    return s_->data[0];
  }

  // NCHW element access; callers guarantee rank 4.
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const auto& sh = s_->shape;
    return s_->data[((n * sh[1] + c) * sh[2] + h) * sh[3] + w];
  }
  T operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const auto& sh = s_->shape;
    return s_->data[((n * sh[1] + c) * sh[2] + h) * sh[3] + w];
  }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    s_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  std::span<T> grad() { return s_->grad; }

  // Allocates a zero gradient buffer on first use. Const because the
  // gradient belongs to the shared storage, not to this handle.
  std::span<T> mutable_grad() const {
    if (s_->grad.empty()) s_->grad.assign(numel(), T(0));
    return s_->grad;
  }

  void zero_grad() const {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  Tensor clone() const {
    Tensor t(shape(), s_->data);
    return t;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Ordered record of differentiable primitives executed while the tape is
// active. backward() replays the entries in exact reverse order.
template <class T>
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward) {
    entries_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Populates gradients of every requires_grad leaf reachable from `loss`.
  // Intermediate gradients are reset on each call; leaf gradients
  // accumulate across repeated calls until zero_grad().
  void backward(Tensor<T> loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("backward: loss must be a scalar tensor");
    }
    const auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                                 [&](const Entry& e) { return e.output.same_storage(loss); });
    if (it == entries_.rend()) {
      throw ContractError("backward: loss was not produced under this tape");
    }
    for (auto& e : entries_) {
      auto out = e.output;
      out.mutable_grad();
      out.zero_grad();
    }
    loss.mutable_grad()[0] = T(1);
    // Entries after the loss cannot contribute to it.
    for (auto e = it; e != entries_.rend(); ++e) e->backward();
  }

 private:
  std::vector<Entry> entries_;
};

// Makes `tape` the thread's recording tape for the guard's lifetime.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : saved_(Tape<T>::active()) { Tape<T>::active() = &tape; }
  ~TapeScope() { Tape<T>::active() = saved_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* saved_;
};

// Disables recording for the guard's lifetime.
template <class T>
class NoGradScope {
 public:
  NoGradScope() : saved_(Tape<T>::active()) { Tape<T>::active() = nullptr; }
  ~NoGradScope() { Tape<T>::active() = saved_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* saved_;
};

template <class T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) throw ContractError("backward: no active tape");
  tape->backward(loss);
}

namespace detail {

// Returns the active tape when any input participates in differentiation.
template <class T>
Tape<T>* tracking_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

}  // namespace detail

}  // namespace snapsci
