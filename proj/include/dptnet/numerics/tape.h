// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

#include "dptnet/numerics/tensor.h"

namespace dptnet {

// Ordered record of differentiable operations.
//
// Operations record themselves on the tape that is active on the calling
// thread (see TapeScope) whenever at least one input requires grad. Because
// nodes are appended in execution order, every node appears after the nodes
// producing its inputs, and backward() is a single reverse sweep.
//
// Gradients of leaves accumulate across backward() calls until zero_grad();
// gradients of intermediate values are reset on every call and released as
// soon as they have been propagated.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor<T>& output, std::vector<Tensor<T>> inputs, BackwardFn fn);

  // Populates grad on every requires_grad leaf reachable from `loss`.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Tape receiving operations on this thread, or nullptr.
  static Tape* active();

 private:
  template <typename>
  friend class TapeScope;
  static Tape*& active_slot();

  struct Node {
    Tensor<T> output;
    std::vector<Tensor<T>> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
// A null tape disables recording (inference mode).
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>* tape) : previous_(Tape<T>::active_slot()) {
    Tape<T>::active_slot() = tape;
  }
  ~TapeScope() { Tape<T>::active_slot() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <typename T>
class NoGradScope : public TapeScope<T> {
 public:
  NoGradScope() : TapeScope<T>(nullptr) {}
};

// Records `fn` for `output` if a tape is active and any input requires grad.
// Returns true when the node was recorded (the output then requires grad).
template <typename T>
bool record_op(Tensor<T>& output, std::initializer_list<Tensor<T>> inputs,
               typename Tape<T>::BackwardFn fn) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return false;
  bool needed = false;
  for (const auto& in : inputs) needed = needed || (in.defined() && in.requires_grad());
  if (!needed) return false;
  output.set_requires_grad(true);
  tape->record(output, std::vector<Tensor<T>>(inputs), std::move(fn));
  return true;
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dptnet
