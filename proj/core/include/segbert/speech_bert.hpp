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
#include <span>
#include <utility>
#include <vector>

#include "segbert/corpus.hpp"
#include "segbert/layers.hpp"
#include "segbert/template.hpp"

namespace segbert::bert {

struct SpeechBertConfig {
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t text_layers = 2;
  std::size_t speech_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t d_ff = 64;
  std::size_t mel_bins = 8;
  std::size_t vocab_size = 32;
  std::size_t max_frames = 2000;
  double mask_rate = 0.2;
  // Draw exactly round(rate * syllables) spans instead of one coin per syllable.
  bool exact_count_masking = false;
  // Restrict the reconstruction loss to masked frames.
  bool masked_only_loss = false;
  double dropout = 0.0;
  double learning_rate = 1e-3;

  // Width of the speech-encoder states used as segment embeddings.
  std::size_t embedding_dim() const noexcept { return d_model; }
  void validate() const;
};

struct MaskPlan {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;  // [start, end) frames
  std::uint64_t seed = 0;
};

// Picks syllables to mask: an independent draw with probability `rate` per
// syllable, or exactly round(rate * count) syllables when exact_count is set.
MaskPlan plan_masks(const features::AlignmentRecord& alignment, double rate, std::uint64_t seed,
                    bool exact_count = false);

// Overwrites each planned span with pad_mask(template, span length).
features::MelSpectrogram apply_masks(const features::MelSpectrogram& mel, const MaskPlan& plan,
                                     const templ::AcousticTemplate& tmpl);

// Text encoder, speech encoder (two-layer ReLU pre-net + attention stack) and
// a bidirectional decoder that reads the speech-encoder states and
// cross-attends to the text. No causal masks, no stop-token head, no
// speaker input.
class SpeechBertModel {
 public:
  SpeechBertModel(const SpeechBertConfig& cfg, std::uint64_t seed);

  struct Output {
    nn::Var recon;   // T x B
    nn::Var states;  // T x d_E
  };

  Output forward(nn::Tape& tape, std::span<const std::size_t> text, const Tensor& masked_mel,
                 const nn::RunContext& ctx = {}) const;
  nn::Var encode_speech(nn::Tape& tape, const Tensor& mel, const nn::RunContext& ctx = {}) const;

  // Top speech-encoder states for a segment encoded on its own. Safe to call
  // concurrently on a model nobody is training.
  Tensor extract_embedding(const Tensor& segment) const;

  const SpeechBertConfig& config() const noexcept { return cfg_; }
  nn::ParameterSet& params() noexcept { return params_; }
  const nn::ParameterSet& params() const noexcept { return params_; }

 private:
  SpeechBertModel(const SpeechBertConfig& cfg, Rng&& rng);

  SpeechBertConfig cfg_;
  nn::ParameterSet params_;
  nn::Embedding text_embedding_;
  nn::PositionalEncoding text_position_;
  nn::EncoderStack text_encoder_;
  nn::Linear speech_prenet1_, speech_prenet2_;
  nn::PositionalEncoding speech_position_;
  nn::EncoderStack speech_encoder_;
  nn::DecoderStack decoder_;
  nn::Linear mel_head_;
};

// Mean squared reconstruction error over every frame and bin. With
// frame_weights, only weighted frames count (masked-only ablation).
nn::Var bert_loss(nn::Var recon, nn::Var ground_truth,
                  std::span<const double> frame_weights = {});

// Row weights that select the frames covered by a plan.
std::vector<double> masked_frame_weights(std::size_t frames, const MaskPlan& plan);

struct BertTrainOptions {
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
};

// Utterance-level Adam steps: sample an utterance, plan and apply masks,
// reconstruct, step. The model starts from SpeechBertModel(cfg, seed).
SpeechBertModel train_bert(std::span<const features::Utterance> corpus,
                           const templ::AcousticTemplate& tmpl, const SpeechBertConfig& cfg,
                           const BertTrainOptions& options,
                           std::vector<double>* loss_history = nullptr);

// Mean reconstruction loss over the corpus with masks drawn from mask_seed.
double evaluate_bert(const SpeechBertModel& model, std::span<const features::Utterance> corpus,
                     const templ::AcousticTemplate& tmpl, std::uint64_t mask_seed);

}  // namespace segbert::bert
