/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "segbert/tensor.hpp"

namespace segbert {
class Rng;
}

namespace segbert::nn {

// A named trainable tensor. `grad` has the same shape as `value` and is
// accumulated into by Tape::backward.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid for the lifetime
// of the tape that produced it.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const noexcept { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records a computation in creation order, which is a topological order by
// construction; backward() walks it in reverse. A tape built with
// grad_enabled=false only stores values (inference mode).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Binds a parameter as a leaf. Binding the same parameter twice returns the
  // same node.
  Var param(Parameter& p);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id()); }
  // Gradient buffer for a node, zero-initialised on first access.
  Tensor& grad(std::uint32_t id);
  Tensor& grad(Var v) { return grad(v.id()); }
  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node, then
  // adds leaf gradients into their Parameters. Allowed once per tape.
  void backward(Var loss);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> bound_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

// Attention mask; allowed(r, c) == true means query r may attend to key c.
class Mask {
 public:
  Mask(std::size_t rows, std::size_t cols, bool fill = true);
  // Query t attends to keys 0..t.
  static Mask causal(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool allowed(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool allowed) { bits_[r * cols_ + c] = allowed; }

 private:
  std::size_t rows_, cols_;
  std::vector<std::uint8_t> bits_;
};

// ---- differentiable operations -------------------------------------------

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var add_row(Var a, Var row);  // row (1 x n) broadcast over a's rows
Var scale(Var a, double factor);
Var scale_by(Var a, Var factor);  // factor is 1x1
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var masked_softmax(Var scores, const Mask* mask);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var repeat_row(Var row, std::size_t n);
// Same-padded sliding window over rows: output row t holds rows
// t-(k-1)/2 .. t+k/2 of x laid out tap-major, zeros outside.
Var unfold_rows(Var x, std::size_t kernel);
Var dropout(Var a, double rate, Rng& rng);
Var sum(Var a);
Var mean(Var a);
// Mean of squared differences over all elements.
Var mse(Var a, Var b);
// Squared error over rows with row weights, normalised by sum(w) * cols.
Var weighted_mse(Var a, Var b, std::span<const double> row_weights);
// Mean binary cross-entropy of logits against 0/1 targets.
Var bce_with_logits(Var logits, std::span<const double> targets);

}  // namespace segbert::nn
