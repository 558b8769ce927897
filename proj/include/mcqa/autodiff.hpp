// Copyright 2026 The mcqa Authors.
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

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation applied to its Vars. Tape::backward walks the
// record in reverse, accumulating gradients into the Parameters that were
// pulled onto the tape. A tape is single-threaded and single-use; build a new
// one per forward pass.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcqa/rng.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
};

/// Named trainable tensors with matching gradient accumulators. Insertion
/// order is preserved and is the order used for checkpoints and optimizers.
/// References returned by add() stay valid for the life of the store.
template <typename T>
class ParameterStore {
 public:
  /// Throws UsageError on a duplicate name.
  Parameter<T>& add(const std::string& name, Matrix<T> value);

  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;

  /// Throws UsageError when absent.
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }
  std::size_t num_scalars() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  int id() const noexcept { return id_; }

  const Matrix<T>& value() const { return tape_->value(id_); }
  /// Gradient after Tape::backward; empty when nothing flowed here.
  const Matrix<T>& grad() const { return tape_->grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1 x 1 Var.
  T scalar() const;

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf that never receives gradient.
  Var<T> constant(Matrix<T> value);
  /// A leaf that receives gradient (readable with Var::grad after backward).
  Var<T> variable(Matrix<T> value);
  /// A leaf bound to a parameter. Repeated calls for one parameter return the
  /// same node; backward adds the node's gradient into `param.grad`.
  Var<T> parameter(Parameter<T>& param);

  /// Records an op result. `fn` propagates the node's gradient to its inputs
  /// and is dropped when no input requires gradient.
  Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> inputs, Backward fn);
  Var<T> record(Matrix<T> value, std::span<const Var<T>> inputs, Backward fn);

  const Matrix<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix<T>& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Adds `g` to the gradient of node `id` (no-op if it needs none).
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Gradient buffer of node `id`, zero-initialized on first access.
  Matrix<T>& grad_buffer(int id);

  /// Seeds d loss/d loss = 1 and runs the reverse sweep. `loss` must be 1 x 1
  /// and finite. Parameter gradients are accumulated, not overwritten.
  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
};

/// Rows [offset, offset + length) of a stacked sequence matrix.
struct Segment {
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

// Forward primitives. Shape mismatches throw ShapeError naming both shapes.
// Reductions use axis 0 for "over rows" (result 1 x cols) and axis 1 for
// "over columns" (result rows x 1).

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// Elementwise with broadcasting of size-1 dimensions.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> concat(std::span<const Var<T>> parts, int axis);
template <typename T> Var<T> slice_rows(Var<T> a, Eigen::Index begin, Eigen::Index count);
template <typename T> Var<T> slice_cols(Var<T> a, Eigen::Index begin, Eigen::Index count);
template <typename T> Var<T> element(Var<T> a, Eigen::Index row, Eigen::Index col);

template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);
template <typename T> Var<T> log(Var<T> a);

/// Max-subtracted softmax along `axis`.
template <typename T> Var<T> softmax(Var<T> a, int axis);
template <typename T> Var<T> log_softmax(Var<T> a, int axis);
template <typename T> Var<T> logsumexp(Var<T> a, int axis);
/// 1 x 1 log-sum-exp over every entry.
template <typename T> Var<T> logsumexp_all(Var<T> a);

template <typename T> Var<T> sum(Var<T> a, int axis);
template <typename T> Var<T> sum_all(Var<T> a);
/// Gradient flows to the first extremal entry.
template <typename T> Var<T> max(Var<T> a, int axis);
template <typename T> Var<T> min(Var<T> a, int axis);
template <typename T> Var<T> mean(Var<T> a, int axis);
/// Population standard deviation. The gradient is taken as zero where the
/// deviation is exactly zero.
template <typename T> Var<T> stddev(Var<T> a, int axis);
/// 1 x 1 sum of elementwise products of equally shaped operands.
template <typename T> Var<T> dot(Var<T> a, Var<T> b);

/// Inverted dropout: kept entries scale by 1/(1-rate). Returns `a` itself
/// when `train` is false or rate is 0.
template <typename T> Var<T> dropout(Var<T> a, double rate, bool train, Rng* rng);

/// GRU over each segment of `x` (zero initial state), one direction.
///   x: len x in, w: in x 3h, u: h x 3h, bias: 1 x 3h (gate blocks z | r | n)
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn), h' = (1 - z) * h + z * n
/// Rows outside every segment produce zeros. An empty segment list means one
/// segment spanning all rows. The backward pass is hand-written BPTT.
template <typename T>
Var<T> gru(Var<T> x, Var<T> w, Var<T> u, Var<T> bias, std::span<const Segment> segments, bool reverse);

/// For each segment, softmax(logits over its rows) weighted sum of rows of h.
///   h: len x d, logits: len x 1 -> segments x d. Segments must be non-empty.
template <typename T>
Var<T> segment_attention_pool(Var<T> h, Var<T> logits, std::span<const Segment> segments);

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T> Var<T> operator-(Var<T> a) { return scale(a, T(-1)); }

}  // namespace mcqa
