// Copyright 2026 The sphreg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "sphreg/common.hpp"

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// Every recorded node owns its forward value. A node built from at least one
// gradient-carrying parent stores a closure that maps the node's output
// gradient to contributions on its parents. Tape::backward replays the
// closures in reverse recording order.
namespace sphreg::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);
  // Records an operation. `fn` is dropped when no parent carries gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward fn);
  Var record(Matrix value, const std::vector<Var>& parents, Backward fn);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Adds `g` to the gradient of `v`; ignored for constants.
  void accumulate(Var v, const Matrix& g);

  // Seeds the 1x1 `root` with gradient 1 and propagates.
  void backward(Var root);

  // Gradient of `v` after backward (zeros when nothing reached it).
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// Binds parameter matrices to tape leaves, one leaf per distinct matrix
// address, so gradients can be read back per parameter after backward.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}

  Var operator()(const Matrix& m);
  // Zero matrix for parameters that were never bound.
  Matrix grad(const Matrix& m) const;
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  bool trainable_;
  std::vector<std::pair<const Matrix*, Var>> bound_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
// Sum of equally shaped terms.
Var sum(const std::vector<Var>& terms);
Var matmul(Var a, Var b);
// Constant left factor: c * a.
Var matmul(const Matrix& c, Var a);
// Elementwise product.
Var hadamard(Var a, Var b);
// Horizontal concatenation.
Var hcat(const std::vector<Var>& parts);
Var top_rows(Var a, Eigen::Index n);
Var relu(Var a);
Var elu(Var a, double alpha = 1.0);
Var softmax_rows(Var a);
// Sum of all entries (1x1).
Var sum_all(Var a);
// Normalizes every row to unit Euclidean length.
Var normalize_rows(Var a);

}  // namespace sphreg::ad
