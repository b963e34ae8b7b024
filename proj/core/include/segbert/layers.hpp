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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "segbert/autodiff.hpp"
#include "segbert/random.hpp"

namespace segbert::nn {

// Owns every trainable tensor of a model. Parameter addresses are stable for
// the lifetime of the set, so layers keep plain pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& create(std::string name, Tensor init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng);

// Dropout source threaded through forward passes. With rate 0 (the default)
// or no generator, every forward pass is deterministic.
struct RunContext {
  Rng* rng = nullptr;
  double dropout = 0.0;

  Var apply_dropout(Var x) const;
};

class Linear {
 public:
  Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng, bool bias = true);

  Var forward(Var x) const;
  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  Parameter& weight() noexcept { return *weight_; }  // out x in
  Parameter* bias() noexcept { return bias_; }

 private:
  Parameter* weight_;
  Parameter* bias_ = nullptr;
  std::size_t in_, out_;
};

class LayerNorm {
 public:
  LayerNorm(ParameterSet& ps, const std::string& name, std::size_t width, double eps = 1e-5);
  Var forward(Var x) const;

 private:
  Parameter* gamma_;
  Parameter* beta_;
  double eps_;
};

class FeedForward {
 public:
  FeedForward(ParameterSet& ps, const std::string& name, std::size_t d_model,
              std::size_t d_ff, Rng& rng);
  Var forward(Var x) const;

 private:
  Linear inner_, outer_;
};

// softmax(Q K^T / sqrt(d_head) + mask) V per head, heads concatenated and
// passed through the output projection.
class MultiHeadAttention {
 public:
  MultiHeadAttention(ParameterSet& ps, const std::string& name, std::size_t d_model,
                     std::size_t heads, Rng& rng);

  // query: n x d_model, keys/values: m x d_model. When `weights` is given it
  // receives one n x m attention matrix per head.
  Var forward(Var query, Var keys, Var values, const Mask* mask,
              const RunContext& ctx = {}, std::vector<Tensor>* weights = nullptr) const;

  std::size_t heads() const noexcept { return heads_; }
  Linear& query_proj() noexcept { return wq_; }
  Linear& key_proj() noexcept { return wk_; }
  Linear& value_proj() noexcept { return wv_; }
  Linear& output_proj() noexcept { return wo_; }

 private:
  Linear wq_, wk_, wv_, wo_;
  std::size_t d_model_, heads_;
};

// Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns the
// matching cos, every entry multiplied by alpha.
Tensor scaled_positional_encoding(std::size_t length, std::size_t d_model, double alpha);

class PositionalEncoding {
 public:
  PositionalEncoding(ParameterSet& ps, const std::string& name, double alpha = 1.0);
  // x + alpha * table(rows(x), cols(x))
  Var forward(Var x) const;
  Parameter& alpha() noexcept { return *alpha_; }

 private:
  Parameter* alpha_;
};

// Same-padded convolution along the frame axis. Kernel shape is
// out x kernel x in.
class Conv1d {
 public:
  Conv1d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
         std::size_t kernel, Rng& rng);
  Var forward(Var x) const;

 private:
  Parameter* kernel_;
  Parameter* bias_;
  std::size_t kernel_size_;
};

class Embedding {
 public:
  Embedding(ParameterSet& ps, const std::string& name, std::size_t count,
            std::size_t width, Rng& rng);
  // Throws Errc::vocabulary for ids >= count.
  Var forward(Tape& tape, std::span<const std::size_t> ids) const;
  std::size_t count() const noexcept { return count_; }
  Parameter& table() noexcept { return *table_; }

 private:
  Parameter* table_;
  std::size_t count_;
};

// Pre-norm transformer layers.
class EncoderLayer {
 public:
  EncoderLayer(ParameterSet& ps, const std::string& name, std::size_t d_model,
               std::size_t heads, std::size_t d_ff, Rng& rng);
  Var forward(Var x, const Mask* mask, const RunContext& ctx) const;

 private:
  LayerNorm norm_attn_, norm_ff_;
  MultiHeadAttention attn_;
  FeedForward ff_;
};

class DecoderLayer {
 public:
  DecoderLayer(ParameterSet& ps, const std::string& name, std::size_t d_model,
               std::size_t heads, std::size_t d_ff, Rng& rng);
  Var forward(Var x, Var memory, const Mask* self_mask, const RunContext& ctx) const;

 private:
  LayerNorm norm_self_, norm_cross_, norm_ff_;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward ff_;
};

class EncoderStack {
 public:
  EncoderStack(ParameterSet& ps, const std::string& name, std::size_t layers,
               std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng);
  Var forward(Var x, const Mask* mask, const RunContext& ctx) const;

 private:
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
};

class DecoderStack {
 public:
  DecoderStack(ParameterSet& ps, const std::string& name, std::size_t layers,
               std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng);
  Var forward(Var x, Var memory, const Mask* self_mask, const RunContext& ctx) const;

 private:
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
};

}  // namespace segbert::nn
