/*
 * Copyright 2026 The MSV Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msv/matrix.hpp"

// Minimal reverse-mode automatic differentiation over dense 2-D tensors.
//
// A Tape records primitive applications in creation order; every primitive
// stores a closure that propagates its output gradient to its inputs.
// backward() walks the tape once in reverse and then clears it. Parameters
// live outside the tape: Tape::parameter() binds a Tensor by reference and
// backward() accumulates (+=) into Tensor::grad().
//
// All arithmetic is double precision.
namespace msv::ad {

using Shape = std::vector<std::size_t>;

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
  explicit Tensor(const Matrix& m);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 0 : shape_[1]; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on);

  // Present iff requires_grad(); same length as data().
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{0, 0};
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = std::numeric_limits<std::size_t>::max();

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(const Matrix& m) { return constant(Tensor(m)); }
  Var parameter(Tensor& param);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() loss w.r.t. `v`; valid until the tape is
  // cleared, i.e. only inside backward hooks and tests that call
  // backward(loss, /*keep=*/true).
  const std::vector<double>& grad(Var v) const { return nodes_.at(v.id).grad; }

  // Propagates d(loss)/d(.) through the tape and accumulates into bound
  // parameters. `loss` must be 1x1. The tape is cleared afterwards unless
  // `keep` is set.
  void backward(Var loss, bool keep = false);

  bool recording() const noexcept { return mode_ == Mode::kRecord; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Primitive registration; used by the free functions below.
  using Backward = std::function<void(Tape&, std::size_t self)>;
  Var push(Tensor value, std::vector<std::size_t> inputs, Backward backward,
           const char* op);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::vector<double>& grad_buffer(std::size_t id);
  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  const std::vector<double>& node_grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };

  Mode mode_;
  std::vector<Node> nodes_;
};

// Primitives. All inputs must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
// a + b; b may also be a 1 x cols row broadcast over the rows of a.
Var add(Var a, Var b);
Var scale(Var a, double s);
// Row-wise softmax of (logits + additive). `additive` holds 0 for permitted
// and -inf for masked entries; rows with no permitted entry produce zeros.
Var row_softmax_with_additive_mask(Var logits, const Tensor& additive);
Var row_softmax(Var logits);
Var sigmoid(Var a);
// Per-row normalization followed by gain/bias (both 1 x cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Exact (erf) GELU.
Var gelu(Var a);
Var mean_rows(Var a);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var sum(Var a);
// sum_j weights(0, j) * parts[j]; weights is 1 x parts.size().
Var weighted_sum(std::span<const Var> parts, Var weights);
// sum_i BCE(clamp(sigmoid(logits_i)), labels_i) over a column of logits, with
// probabilities clamped to [clamp, 1 - clamp].
Var bce_with_logits_sum(Var logits, std::span<const double> labels, double clamp = 1e-12);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }

// Maximum elementwise relative error between analytic gradients (one
// backward pass of `loss_fn`) and central differences
// (f(p + eps) - f(p - eps)) / (2 eps), with relative error
// |a - n| / max(|a|, |n|, 1e-8). `loss_fn` must build its graph on the tape
// it is given and be deterministic. Throws PreconditionError for eps <= 0.
double finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                         std::span<Tensor* const> params, double eps);

}  // namespace msv::ad
