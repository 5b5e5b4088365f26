// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/numerics/tape.h"

#include "dptnet/error.h"

namespace dptnet {

template <typename T>
Tape<T>*& Tape<T>::active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot();
}

template <typename T>
void Tape<T>::record(const Tensor<T>& output, std::vector<Tensor<T>> inputs, BackwardFn fn) {
  nodes_.push_back(Node{output, std::move(inputs), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward(): loss does not depend on any tensor requiring grad");
  }
  // Intermediate values restart from zero on every sweep.
  for (auto& node : nodes_) {
    auto out = node.output;
    out.release_grad();
  }
  auto seed = loss;
  seed.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
    it->output.release_grad();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dptnet
