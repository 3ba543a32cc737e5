/* Copyright (c) 2026 The sfgsr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sfgsr/errors.hpp"
#include "sfgsr/numerics/tensor.hpp"

namespace sfgsr::num {

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
// is alive and has not been reset.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(std::size_t i) const { return value().dim(i); }
  std::size_t rank() const { return value().rank(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  const Tensor<T>& grad() const { return tape_->grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order so that gradients can be propagated
// in exact reverse order. One backward pass per recording: after backward the
// tape is consumed and must be reset before it can record again.
//
// Parameter gradients accumulate across tapes (they are added into
// Parameter::grad); call Parameter::zero_grad between optimizer steps.
template <typename T>
class Tape {
 public:
  class Context {
   public:
    Context(Tape& tape, const std::vector<std::size_t>& inputs, std::size_t output)
        : tape_(tape), inputs_(inputs), output_(output) {}

    const Tensor<T>& out_value() const { return tape_.nodes_[output_].value; }
    const Tensor<T>& out_grad() const { return tape_.nodes_[output_].grad; }
    const Tensor<T>& in_value(std::size_t i) const { return tape_.nodes_[inputs_[i]].value; }
    bool needs(std::size_t i) const { return tape_.nodes_[inputs_[i]].requires_grad; }
    // Gradient buffer of input i, zero-initialized on first use.
    Tensor<T>& in_grad(std::size_t i) { return tape_.grad_buffer(inputs_[i]); }

   private:
    Tape& tape_;
    const std::vector<std::size_t>& inputs_;
    std::size_t output_;
  };
  using BackwardFn = std::function<void(Context&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_ops() const { return ops_.size(); }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  // A leaf whose gradient is kept on the tape (see Var::grad).
  Var<T> variable(Tensor<T> value) { return push(std::move(value), recording_, nullptr); }

  // A leaf bound to a parameter; backward adds its gradient into p.grad.
  Var<T> parameter(const Parameter<T>& p) {
    return push(p.value, recording_, recording_ ? &p.grad : nullptr);
  }

  // Append an operation result. The backward rule runs only if at least one
  // input requires a gradient and the tape is recording.
  Var<T> record(Tensor<T> out, std::vector<Var<T>> inputs, BackwardFn fn) {
    bool any = false;
    for (const auto& v : inputs) {
      if (&v.tape() != this) throw UsageError("operation mixes values from different tapes");
      any = any || nodes_[v.id()].requires_grad;
    }
    check_open();
    if (!recording_ || !any) return push(std::move(out), false, nullptr);
    Var<T> y = push(std::move(out), true, nullptr);
    Op op;
    op.output = y.id();
    op.inputs.reserve(inputs.size());
    for (const auto& v : inputs) op.inputs.push_back(v.id());
    op.backward = std::move(fn);
    ops_.push_back(std::move(op));
    return y;
  }

  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw UsageError("loss is not recorded on this tape");
    if (consumed_) throw UsageError("tape already consumed by backward; call reset() first");
    if (loss.value().size() != 1) {
      throw UsageError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    }
    consumed_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id()).fill(T(1));
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (nodes_[it->output].grad.empty()) continue;
      Context ctx(*this, it->inputs, it->output);
      it->backward(ctx);
    }
    for (auto& node : nodes_) {
      if (node.sink == nullptr || node.grad.empty()) continue;
      if (node.sink->empty()) *node.sink = Tensor<T>(node.value.shape());
      auto dst = node.sink->data();
      auto src = node.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }

  void reset() {
    nodes_.clear();
    ops_.clear();
    consumed_ = false;
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }
  const Tensor<T>& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty()) {
      throw UsageError("no gradient recorded for node " + std::to_string(id));
    }
    return n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Tensor<T>* sink = nullptr;
  };
  struct Op {
    std::vector<std::size_t> inputs;
    std::size_t output = 0;
    BackwardFn backward;
  };

  void check_open() const {
    if (consumed_) throw UsageError("tape already consumed by backward; call reset() first");
  }

  Var<T> push(Tensor<T> value, bool requires_grad, Tensor<T>* sink) {
    check_open();
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, sink});
    return Var<T>(this, nodes_.size() - 1);
  }

  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // deque: references to node values stay valid while new nodes are pushed.
  std::deque<Node> nodes_;
  std::vector<Op> ops_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace sfgsr::num
