// Copyright 2026 The phasemotion Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phasemotion/error.hpp"
#include "phasemotion/tensor.hpp"

namespace phasemotion {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of primitive ops.
///
/// Every recorded value gets an id; inputs always carry smaller ids than the
/// ops consuming them, so walking ids downwards is a reverse topological
/// order. A tape is single-writer: give each concurrent forward pass its own.
class Tape {
 public:
  // Pulls the output adjoint back into the inputs via accumulate().
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  // Leaf whose adjoint is tracked (parameters and differentiable inputs).
  Var variable(Tensor value) { return push(std::move(value), true, nullptr); }

  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || nodes_.at(v.id()).requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || nodes_.at(v.id()).requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Id the next recorded value will receive, so a closure can read its own
  // output back during the sweep.
  std::size_t next_id() const noexcept { return nodes_.size(); }

  // Adjoint buffer of `id`, zero-initialised on first touch. Backward closures
  // should skip inputs for which requires_grad() is false.
  Tensor& accumulate(std::size_t id) {
    Node& node = nodes_.at(id);
    if (!node.has_grad) {
      // Reuse the buffer of an earlier sweep when possible.
      if (node.grad.shape() == node.value.shape()) {
        node.grad.fill(0.0);
      } else {
        node.grad = Tensor(node.value.shape(), 0.0);
      }
      node.has_grad = true;
    }
    return node.grad;
  }

  /// Runs the reverse sweep from a scalar loss. Adjoints from any previous
  /// sweep are discarded first, so replaying yields identical gradients.
  void backward(const Var& loss) {
    if (loss.valid() && &loss.tape() != this) {
      throw UsageError("backward: loss was recorded on a different tape");
    }
    const Tensor& lv = value(loss.id());
    if (lv.size() != 1) {
      throw UsageError("backward: loss must be a scalar, got shape " +
                       shape_string(lv.shape()));
    }
    for (Node& n : nodes_) n.has_grad = false;
    if (!requires_grad(loss.id())) return;
    accumulate(loss.id()).fill(1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.has_grad || !node.backward) continue;
      // Closures only write adjoints of inputs, which carry smaller ids, and
      // nothing is appended during the sweep, so the reference stays valid.
      node.backward(*this, node.grad);
    }
  }

  /// Adjoint of `v` from the last sweep; zeros when `v` was not reached.
  Tensor grad(const Var& v) const {
    const Node& node = nodes_.at(v.id());
    if (!node.has_grad) return Tensor(node.value.shape(), 0.0);
    return node.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward),
                          requires_grad, false});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace phasemotion
