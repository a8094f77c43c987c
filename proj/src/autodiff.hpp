// Copyright 2026 The SkeleFusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Leaves are constants,
// inputs (gradient retained) or parameters (gradient routed to a slot of a
// caller-owned gradient list). backward() walks the tape once in reverse.
// Parameters are never mutated by the tape, so a frozen model can be shared
// by concurrent forward passes on separate tapes.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace skf::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid with its tape.
class Var {
 public:
  Var() = default;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  /// With track_params=false, parameter() yields constants (frozen weights).
  explicit Tape(bool track_params = true) : track_params_(track_params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is kept and can be read with grad().
  Var input(Matrix value);
  /// Leaf bound to an external tensor; its gradient is added to
  /// grads[slot] by accumulate_param_grads(). `value` must outlive the tape.
  Var parameter(const Matrix& value, std::size_t slot);

  /// Records an op output. `parents` decide whether it needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }

  /// Adds `g` to the gradient of `v` (no-op for nodes that need none).
  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g) {
    if (!requires_grad(v)) return;
    auto& node = nodes_[static_cast<std::size_t>(v.id())];
    if (node.grad.size() == 0) node.grad = g;
    else node.grad += g;
  }

  /// Reverse sweep from a 1x1 node.
  void backward(Var loss);

  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Matrix grad(Var v) const;

  /// Adds parameter-leaf gradients into grads[slot]. Entries must be
  /// pre-sized to their tensor's shape.
  void accumulate_param_grads(std::vector<Matrix>& grads) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* external = nullptr;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
    std::int64_t param_slot = -1;
  };
  std::vector<Node> nodes_;
  bool track_params_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes are checked; mismatches throw skf::Error(kShape).

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_bt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var exp(Var a);
/// Gaussian error linear unit, exact erf form.
Var gelu(Var a);
/// Clamps to [lo, hi]; gradient is zero outside.
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
/// Per-row normalization to zero mean / unit variance, then gamma, beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Rows of `table` picked by index (may repeat).
Var gather_rows(Var table, std::vector<int> index);
/// out[i] = keep[i] ? a[i] : token, token being a 1 x c row.
Var select_rows(Var a, std::vector<std::uint8_t> keep, Var token);
/// Row-major reinterpretation.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

/// Multi-head scaled dot-product attention, block-diagonal over groups of
/// `block` consecutive rows. Keys with key_visible == 0 get weight exactly
/// zero; a block with no visible key attends over all of its keys.
struct AttentionLayout {
  Eigen::Index block = 0;
  int heads = 1;
  std::vector<std::uint8_t> key_visible;  // empty: all visible
};
Var attention(Var q, Var k, Var v, const AttentionLayout& layout);

/// sum_i w_i * sum_d (pred - target)^2 over rows i of D-wide groups: pred and
/// target are R x (G*D) with weights R x G.
Var weighted_squared_error(Var pred, const Matrix& target, const Matrix& weights);
/// Same with |pred - target|; d|x|/dx at 0 is taken as 0.
Var weighted_abs_error(Var pred, const Matrix& target, const Matrix& weights);
/// -1/2 sum(1 + lv - mu^2 - exp(lv)) with lv clamped to [lo, hi].
Var kl_standard_normal(Var mu, Var log_var, double lo = -10.0, double hi = 10.0);

}  // namespace skf::ad
