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

#include "segbert/layers.hpp"

#include <cmath>

#include "segbert/error.hpp"

namespace segbert::nn {

Parameter& ParameterSet::create(std::string name, Tensor init) {
  require(find(name) == nullptr, Errc::config, "duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init)));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Tensor xavier_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Var RunContext::apply_dropout(Var x) const {
  if (rng == nullptr || dropout <= 0.0) return x;
  return nn::dropout(x, dropout, *rng);
}

Linear::Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng, bool bias)
    : weight_(&ps.create(name + ".weight", xavier_uniform({out, in}, in, out, rng))),
      in_(in),
      out_(out) {
  if (bias) bias_ = &ps.create(name + ".bias", Tensor(1, out));
}

Var Linear::forward(Var x) const {
  require(x.cols() == in_, Errc::dimension,
          weight_->name + ": expected width " + std::to_string(in_) + ", got " +
              x.value().shape_string());
  Tape& tape = x.tape();
  Var y = matmul_nt(x, tape.param(*weight_));
  if (bias_ != nullptr) y = add_row(y, tape.param(*bias_));
  return y;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, std::size_t width, double eps)
    : gamma_(&ps.create(name + ".gamma", Tensor(1, width, 1.0))),
      beta_(&ps.create(name + ".beta", Tensor(1, width, 0.0))),
      eps_(eps) {}

Var LayerNorm::forward(Var x) const {
  Tape& tape = x.tape();
  return layer_norm(x, tape.param(*gamma_), tape.param(*beta_), eps_);
}

FeedForward::FeedForward(ParameterSet& ps, const std::string& name, std::size_t d_model,
                         std::size_t d_ff, Rng& rng)
    : inner_(ps, name + ".inner", d_model, d_ff, rng),
      outer_(ps, name + ".outer", d_ff, d_model, rng) {}

Var FeedForward::forward(Var x) const { return outer_.forward(relu(inner_.forward(x))); }

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name,
                                       std::size_t d_model, std::size_t heads, Rng& rng)
    : wq_(ps, name + ".query", d_model, d_model, rng),
      wk_(ps, name + ".key", d_model, d_model, rng),
      wv_(ps, name + ".value", d_model, d_model, rng),
      wo_(ps, name + ".out", d_model, d_model, rng),
      d_model_(d_model),
      heads_(heads) {
  require(heads >= 1 && d_model % heads == 0, Errc::config,
          name + ": d_model " + std::to_string(d_model) + " not divisible by " +
              std::to_string(heads) + " heads");
}

Var MultiHeadAttention::forward(Var query, Var keys, Var values, const Mask* mask,
                                const RunContext& ctx, std::vector<Tensor>* weights) const {
  require(query.cols() == d_model_ && keys.cols() == d_model_ && values.cols() == d_model_,
          Errc::dimension, "attention inputs must all be " + std::to_string(d_model_) + " wide");
  require(keys.rows() == values.rows(), Errc::dimension,
          "attention keys and values differ in length");
  Var q = wq_.forward(query);
  Var k = wk_.forward(keys);
  Var v = wv_.forward(values);
  const std::size_t d_head = d_model_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
  std::vector<Var> per_head;
  per_head.reserve(heads_);
  if (weights != nullptr) weights->clear();
  for (std::size_t h = 0; h < heads_; ++h) {
    Var qh = slice_cols(q, h * d_head, d_head);
    Var kh = slice_cols(k, h * d_head, d_head);
    Var vh = slice_cols(v, h * d_head, d_head);
    Var p = masked_softmax(scale(matmul_nt(qh, kh), inv_sqrt), mask);
    if (weights != nullptr) weights->push_back(p.value());
    per_head.push_back(matmul(ctx.apply_dropout(p), vh));
  }
  Var joined = heads_ == 1 ? per_head.front() : concat_cols(per_head);
  return wo_.forward(joined);
}

Tensor scaled_positional_encoding(std::size_t length, std::size_t d_model, double alpha) {
  Tensor table(length, d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t j = 0; j < d_model; ++j) {
      const double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      table(pos, j) = alpha * (j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return table;
}

PositionalEncoding::PositionalEncoding(ParameterSet& ps, const std::string& name, double alpha)
    : alpha_(&ps.create(name + ".alpha", Tensor::scalar(alpha))) {}

Var PositionalEncoding::forward(Var x) const {
  Tape& tape = x.tape();
  Var table = tape.constant(scaled_positional_encoding(x.rows(), x.cols(), 1.0));
  return add(x, scale_by(table, tape.param(*alpha_)));
}

Conv1d::Conv1d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
               std::size_t kernel, Rng& rng)
    : kernel_(&ps.create(name + ".kernel",
                         xavier_uniform({out, kernel, in}, in * kernel, out * kernel, rng))),
      bias_(&ps.create(name + ".bias", Tensor(1, out))),
      kernel_size_(kernel) {}

Var Conv1d::forward(Var x) const {
  Tape& tape = x.tape();
  require(x.cols() * kernel_size_ == kernel_->value.cols(), Errc::dimension,
          kernel_->name + ": input width mismatch " + x.value().shape_string());
  return add_row(matmul_nt(unfold_rows(x, kernel_size_), tape.param(*kernel_)),
                 tape.param(*bias_));
}

Embedding::Embedding(ParameterSet& ps, const std::string& name, std::size_t count,
                     std::size_t width, Rng& rng)
    : table_(&ps.create(name + ".table", xavier_uniform({count, width}, count, width, rng))),
      count_(count) {}

Var Embedding::forward(Tape& tape, std::span<const std::size_t> ids) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= count_)
      fail_at(Errc::vocabulary, i,
              "id " + std::to_string(ids[i]) + " outside table " + table_->name + " of " +
                  std::to_string(count_));
  return gather_rows(tape.param(*table_), ids);
}

EncoderLayer::EncoderLayer(ParameterSet& ps, const std::string& name, std::size_t d_model,
                           std::size_t heads, std::size_t d_ff, Rng& rng)
    : norm_attn_(ps, name + ".norm_attn", d_model),
      norm_ff_(ps, name + ".norm_ff", d_model),
      attn_(ps, name + ".attn", d_model, heads, rng),
      ff_(ps, name + ".ff", d_model, d_ff, rng) {}

Var EncoderLayer::forward(Var x, const Mask* mask, const RunContext& ctx) const {
  Var h = norm_attn_.forward(x);
  x = add(x, ctx.apply_dropout(attn_.forward(h, h, h, mask, ctx)));
  return add(x, ctx.apply_dropout(ff_.forward(norm_ff_.forward(x))));
}

DecoderLayer::DecoderLayer(ParameterSet& ps, const std::string& name, std::size_t d_model,
                           std::size_t heads, std::size_t d_ff, Rng& rng)
    : norm_self_(ps, name + ".norm_self", d_model),
      norm_cross_(ps, name + ".norm_cross", d_model),
      norm_ff_(ps, name + ".norm_ff", d_model),
      self_attn_(ps, name + ".self_attn", d_model, heads, rng),
      cross_attn_(ps, name + ".cross_attn", d_model, heads, rng),
      ff_(ps, name + ".ff", d_model, d_ff, rng) {}

Var DecoderLayer::forward(Var x, Var memory, const Mask* self_mask,
                          const RunContext& ctx) const {
  Var h = norm_self_.forward(x);
  x = add(x, ctx.apply_dropout(self_attn_.forward(h, h, h, self_mask, ctx)));
  h = norm_cross_.forward(x);
  x = add(x, ctx.apply_dropout(cross_attn_.forward(h, memory, memory, nullptr, ctx)));
  return add(x, ctx.apply_dropout(ff_.forward(norm_ff_.forward(x))));
}

EncoderStack::EncoderStack(ParameterSet& ps, const std::string& name, std::size_t layers,
                           std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
    : final_norm_(ps, name + ".final_norm", d_model) {
  layers_.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i)
    layers_.emplace_back(ps, name + ".layer" + std::to_string(i), d_model, heads, d_ff, rng);
}

Var EncoderStack::forward(Var x, const Mask* mask, const RunContext& ctx) const {
  for (const auto& layer : layers_) x = layer.forward(x, mask, ctx);
  return final_norm_.forward(x);
}

DecoderStack::DecoderStack(ParameterSet& ps, const std::string& name, std::size_t layers,
                           std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
    : final_norm_(ps, name + ".final_norm", d_model) {
  layers_.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i)
    layers_.emplace_back(ps, name + ".layer" + std::to_string(i), d_model, heads, d_ff, rng);
}

Var DecoderStack::forward(Var x, Var memory, const Mask* self_mask,
                          const RunContext& ctx) const {
  for (const auto& layer : layers_) x = layer.forward(x, memory, self_mask, ctx);
  return final_norm_.forward(x);
}

}  // namespace segbert::nn
