// Copyright (c) the nrbench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "nrb/core/array.hpp"
#include "nrb/core/error.hpp"

namespace nrb {

class Tape;

// Handle into a tape. Ops are free functions over Vars; the tape owns all
// node values and adjoints, so Vars stay cheap to copy.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. Forward values are recorded eagerly; backward() walks
// the node list once in reverse. A node only records a backward closure when
// some input needs a gradient, so pure inference pays for value storage only.
class Tape {
 public:
  // Called with the tape and the node's own handle, so the closure can read
  // its output value and adjoint without capturing them up front.
  using BackwardFn = std::function<void(Tape&, Var)>;

  struct Node {
    NdArray value;
    NdArray grad;  // empty until first accumulation
    bool needs_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(NdArray v) {
    bool rg = v.requires_grad;
    return push(std::move(v), rg, /*is_leaf=*/true, nullptr);
  }

  Var constant(NdArray v) {
    v.requires_grad = false;
    return push(std::move(v), false, /*is_leaf=*/true, nullptr);
  }

  // Extension hook: any module can record a node with a custom backward
  // closure; the closure reads values via val() and accumulates via add_grad().
  Var node(NdArray value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      check(in.tape == this, "Tape::node: input from a different tape");
      needs = needs || needs_grad(in);
    }
    return push(std::move(value), needs, false, needs ? std::move(fn) : nullptr);
  }

  const NdArray& val(Var v) const {
    check_var(v);
    return nodes_[static_cast<size_t>(v.id)].value;
  }

  bool needs_grad(Var v) const {
    check_var(v);
    return nodes_[static_cast<size_t>(v.id)].needs_grad;
  }

  // Adjoint buffer, lazily allocated to zeros with the value's shape.
  NdArray& grad_ref(Var v) {
    check_var(v);
    Node& n = nodes_[static_cast<size_t>(v.id)];
    if (n.grad.data.empty() && n.value.numel() > 0) n.grad = NdArray(n.value.shape);
    return n.grad;
  }

  bool grad_touched(Var v) const {
    check_var(v);
    return !nodes_[static_cast<size_t>(v.id)].grad.data.empty();
  }

  void add_grad(Var v, const NdArray& g) {
    if (!needs_grad(v)) return;
    NdArray& buf = grad_ref(v);
    check(buf.same_shape(g), "Tape::add_grad: shape mismatch ",
          shape_str(buf.shape), " vs ", shape_str(g.shape));
    for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
  }

  // Gradients for requires_grad leaves, keyed by node id. Leaves the loss
  // never reached get explicit zeros; requires_grad=false leaves are absent.
  struct GradMap {
    std::map<int, NdArray> grads;
    bool contains(Var v) const { return grads.count(v.id) > 0; }
    const NdArray& at(Var v) const {
      auto it = grads.find(v.id);
      check(it != grads.end(), "GradMap: no gradient for node ", v.id,
            " (leaf without requires_grad?)");
      return it->second;
    }
  };

  GradMap backward(Var loss) {
    check_var(loss);
    check(val(loss).numel() == 1, "backward: loss must be scalar, got shape ",
          shape_str(val(loss).shape));
    check(std::isfinite(val(loss).data[0]), "backward: non-finite loss value");
    grad_ref(loss).data[0] = 1;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && n.needs_grad && !n.grad.data.empty())
        n.backward(*this, Var{this, i});
    }
    GradMap out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.is_leaf && n.needs_grad) {
        if (n.grad.data.empty()) n.grad = NdArray(n.value.shape);
        out.grads.emplace(static_cast<int>(i), n.grad);
      }
    }
    return out;
  }

  size_t size() const { return nodes_.size(); }

  void reset() { nodes_.clear(); }

 private:
  void check_var(Var v) const {
    check(v.tape == this && v.id >= 0 &&
              v.id < static_cast<int>(nodes_.size()),
          "Tape: var does not belong to this tape");
  }

  Var push(NdArray value, bool needs, bool is_leaf, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    n.is_leaf = is_leaf;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

using GradMap = Tape::GradMap;

}  // namespace nrb
