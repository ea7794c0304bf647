// Copyright 2026 The wsnad Authors
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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wsnad/common.hpp"

// Tape-based reverse-mode differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Nodes are kept in a
// deque so references to earlier values stay valid while the tape grows.
// Parameters are not owned by the tape; their gradients are written into a
// caller-provided Gradients map when backward() runs, which lets several
// tapes run on different threads and be reduced in a fixed order afterwards.

namespace wsnad::ad {

struct Parameter {
  std::string name;
  Mat value;
  bool trainable = true;
};

class Gradients {
 public:
  /// Accumulator for p, created as zeros on first use.
  Mat& slot(const Parameter* p);
  const Mat* find(const Parameter* p) const;
  /// Adds every entry of other into this map.
  void merge(const Gradients& other);
  void scale(double s);
  void clear() { grads_.clear(); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Mat> grads_;
};

class Tape;

class Var {
 public:
  Var() = default;
  const Mat& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Reads the gradient of node `self` and adds into the node's inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  /// A tape built with recording off keeps values only; every node is a constant.
  explicit Tape(bool recording) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Differentiable leaf not bound to a parameter; read its gradient with grad_of().
  Var input(Mat value);
  /// Leaf bound to p. Frozen (non-trainable) parameters enter as constants.
  Var param(const Parameter& p);

  /// Seeds d(out)/d(out) = 1; out must be 1×1.
  void backward(const Var& out, Gradients* grads);
  /// Seeds with an explicit upstream gradient of out's shape.
  void backward(const Var& out, const Mat& seed, Gradients* grads);

  /// Gradient accumulated at v by the last backward pass (zeros if none).
  Mat grad_of(const Var& v) const;

  // Op-construction interface.
  Var push(Mat value, bool needs_grad, Backward back);
  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer of node id, zero-allocated on first access.
  Mat& grad(std::size_t id);
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward back;
    const Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;
  bool recording_ = true;
};

// ---- elementwise and linear algebra ----
Var matmul(const Var& a, const Var& b);
/// a·bᵀ
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// x (r×c) + b (1×c) broadcast over rows.
Var add_row(const Var& x, const Var& b);
/// x (r×c) ⊙ g (1×c) broadcast over rows.
Var mul_row(const Var& x, const Var& g);
/// x (r×c) ⊙ c (r×1) broadcast over columns.
Var mul_col(const Var& x, const Var& c);
/// x ⊙ c for a constant matrix of the same shape.
Var mul_const(const Var& x, const Mat& c);

Var relu(const Var& x);
Var elu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);

// ---- structure ----
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t c0, std::size_t c1);
Var slice_rows(const Var& x, std::size_t r0, std::size_t r1);
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
Var reshape(const Var& x, std::size_t rows, std::size_t cols);
Var transpose(const Var& x);
/// Block-diagonal arrangement of the given matrices.
Var block_diag(std::span<const Var> blocks);

// ---- reductions ----
Var sum(const Var& x);
Var mean(const Var& x);
/// Mean over consecutive row blocks: (n·block)×c → n×c.
Var mean_blocks(const Var& x, std::size_t block);
/// Column-wise sum: r×c → 1×c.
Var sum_rows(const Var& x);
/// Row-wise sum: r×c → r×1.
Var sum_cols(const Var& x);

// ---- normalisation / probability ----
Var group_norm(const Var& x, std::size_t groups, double eps);
Var softmax_rows(const Var& x);
Var log_softmax_rows(const Var& x);
/// Softmax over entries with mask != 0; masked entries come out as 0.
/// Every row must keep at least one entry.
Var masked_softmax_rows(const Var& x, const Mat& mask);

// ---- graph helpers ----
/// C(i,j) = a(i) + b(j) for column vectors a (n×1), b (m×1).
Var outer_add(const Var& a, const Var& b);
/// Row (i·n + j) holds (x_i − x_j)² elementwise; x is n×d, result n²×d.
Var pair_sqdiff(const Var& x);

// ---- sequence kernels ----
Var rotary(const Var& x, std::size_t block, std::size_t head_dim, long pos0, bool conjugate,
           double base);
/// Parallel retention over row blocks of length `block`. q, k carry
/// H = gammas.size() heads of equal width in their columns, v carries H
/// value slabs. Per block and head: O = (Q Kᵀ ⊙ D_γ) V.
Var retention(const Var& q, const Var& k, const Var& v, std::span<const double> gammas,
              std::size_t block);

}  // namespace wsnad::ad
