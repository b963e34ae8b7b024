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
#include <optional>
#include <span>
#include <vector>

#include "segbert/corpus.hpp"
#include "segbert/layers.hpp"
#include "segbert/speech_bert.hpp"

namespace segbert::tts {

struct TTSConfig {
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t d_ff = 64;
  std::size_t mel_bins = 8;
  std::size_t vocab_size = 32;
  std::size_t speaker_count = 1;
  std::size_t speaker_dim = 8;
  std::size_t prenet_dim = 32;
  std::size_t segment_frames = 20;  // T_S
  std::size_t embedding_dim = 32;   // d_E, must match the speech BERT
  std::size_t dynamic_projection_dim = 80;
  bool dynamic_embedding = false;
  std::size_t postnet_layers = 3;
  std::size_t postnet_channels = 32;
  std::size_t postnet_kernel = 5;
  double stop_threshold = 0.5;
  std::size_t max_decode_frames = 1000;
  double dropout = 0.0;
  double prenet_dropout = 0.0;
  // Keep pre-net dropout active in evaluation and synthesis as well, as
  // Tacotron-style pre-nets do.
  bool prenet_dropout_always = false;
  double learning_rate = 1e-3;

  void validate() const;
};

// Transformer TTS: text encoder with a speaker lookup table, decoder pre-net,
// causal decoder with cross-attention, mel linear-1 and stop heads, and a
// residual convolutional post-net. With dynamic_embedding, projection-1 maps
// segment embeddings to dynamic_projection_dim and projection-2 maps the
// concatenation [projection-1 output | pre-net output] to d_model; without
// it, a single input projection takes the pre-net output to d_model.
class TransformerTTSModel {
 public:
  TransformerTTSModel(const TTSConfig& cfg, std::uint64_t seed);

  // Text states with the speaker vector appended to every row, mapped back to
  // d_model. Throws Errc::vocabulary for unknown tokens or speakers.
  nn::Var encode_text(nn::Tape& tape, std::span<const std::size_t> tokens,
                      std::uint32_t speaker_id, const nn::RunContext& ctx = {}) const;

  // The text encoder before speaker injection.
  nn::Var encode_text_without_speaker(nn::Tape& tape, std::span<const std::size_t> tokens,
                                      const nn::RunContext& ctx = {}) const;

  nn::Var prenet(nn::Var frames, const nn::RunContext& ctx = {}) const;

  // [projection-1(e) | o_in]; dynamic models only.
  nn::Var concat_dynamic(nn::Var embedding_rows, nn::Var prenet_rows) const;

  struct DecoderOutput {
    nn::Var mel1;         // T x B
    nn::Var stop_logits;  // T x 1
  };

  // Projects decoder inputs (prenet rows or concatenations) to d_model, adds
  // positions and runs the causal decoder against the text memory.
  DecoderOutput decode(nn::Var inputs, nn::Var memory, const nn::RunContext& ctx = {}) const;

  // mel1 + postnet(mel1)
  nn::Var refine(nn::Var mel1) const;

  struct TeacherForced {
    nn::Var mel1, mel_post, stop_logits;
  };

  // Decoder reads [zeros; gt_mel rows 0..T-2]. For dynamic models,
  // embeddings[k] supplies the rows for frames of segment k (see
  // teacher_embeddings); baseline models ignore it.
  TeacherForced forward_teacher_forced(nn::Tape& tape, std::span<const std::size_t> tokens,
                                       std::uint32_t speaker_id, const Tensor& gt_mel,
                                       std::span<const Tensor> embeddings,
                                       const nn::RunContext& ctx = {}) const;

  const TTSConfig& config() const noexcept { return cfg_; }
  nn::ParameterSet& params() noexcept { return params_; }
  const nn::ParameterSet& params() const noexcept { return params_; }

  nn::Embedding& speaker_table() noexcept { return speaker_table_; }
  nn::Linear& speaker_merge() noexcept { return speaker_merge_; }
  nn::Linear& projection1() { return *projection1_; }

 private:
  TransformerTTSModel(const TTSConfig& cfg, Rng&& rng);

  TTSConfig cfg_;
  nn::ParameterSet params_;
  nn::Embedding text_embedding_;
  nn::Linear text_prenet_;
  nn::PositionalEncoding text_position_;
  nn::EncoderStack text_encoder_;
  nn::Embedding speaker_table_;
  nn::Linear speaker_merge_;
  nn::Linear prenet1_, prenet2_;
  std::optional<nn::Linear> input_projection_;  // baseline only
  std::optional<nn::Linear> projection1_;       // dynamic only
  std::optional<nn::Linear> projection2_;       // dynamic only
  nn::PositionalEncoding decoder_position_;
  nn::DecoderStack decoder_;
  nn::Linear mel_head_;
  nn::Linear stop_head_;
  std::vector<nn::Conv1d> postnet_;
};

// Per-segment embeddings for teacher forcing: ceil(T / T_S) matrices, the
// first all zeros (T_S x d_E), entry k extracted from ground-truth segment k-1.
std::vector<Tensor> teacher_embeddings(const bert::SpeechBertModel& bert, const Tensor& gt_mel,
                                       std::size_t segment_frames);

// 1 on the final frame, 0 elsewhere.
std::vector<double> stop_targets(std::size_t frames);

// MSE(mel1, gt) + MSE(mel_post, gt) + BCE(stop_logits, gt_stop).
nn::Var tts_loss(nn::Var mel1, nn::Var mel_post, nn::Var stop_logits, nn::Var gt_mel,
                 std::span<const double> gt_stop);

// ---- autoregressive inference ---------------------------------------------

// The pieces of a model the inference loop calls. Stub implementations let
// the state machine be checked independently of any trained network.
struct InferenceHooks {
  // o_t (1 x B) -> o_in (1 x prenet width)
  std::function<Tensor(const Tensor&)> prenet;
  // e_i (1 x d_E) -> e_in (1 x projection width); dynamic only
  std::function<Tensor(const Tensor&)> project_embedding;
  // Decoder input prefix I -> (o_{t+1} as 1 x B, stop logit)
  std::function<std::pair<Tensor, double>(const Tensor&)> decode;
  // Q (T_S x B) -> E (T_S x d_E); dynamic only
  std::function<Tensor(const Tensor&)> encode_segment;
};

struct InferenceSettings {
  std::size_t segment_frames = 20;
  std::size_t embedding_dim = 32;
  std::size_t mel_bins = 8;
  bool dynamic_embedding = true;
  double stop_threshold = 0.5;
  std::size_t max_frames = 1000;
};

// Bookkeeping of the loop: t counts emitted frames, i the position inside the
// current segment, O the emitted frames (O row 0 is the zero frame o_0), Q the
// frames of the current segment, I the decoder inputs, E the embeddings in use.
struct InferenceState {
  std::size_t t = 0;
  std::size_t i = 0;
  Tensor O, Q, I, E;
  bool embeddings_are_zero = true;
};

struct RefreshEvent {
  std::size_t at_t = 0;         // t when the refresh ran
  std::size_t first_frame = 0;  // O indices fed to the speech encoder
  std::size_t last_frame = 0;
  Tensor inputs;
};

struct InferenceTrace {
  std::vector<RefreshEvent> refreshes;
  // One flag per emitted frame o_1..o_t: decoded with all-zero embeddings.
  std::vector<bool> zero_embedding;
  bool stopped = false;
  bool truncated = false;
};

struct InferenceResult {
  Tensor frames;  // o_1..o_t (o_0 dropped)
  InferenceState state;
  InferenceTrace trace;
};

InferenceResult run_inference(const InferenceSettings& settings, const InferenceHooks& hooks);

struct SynthesisResult {
  features::MelSpectrogram mel;  // post-net refined
  Tensor mel1;
  InferenceTrace trace;
};

// Greedy synthesis. Dynamic models need a speech BERT for segment refreshes.
SynthesisResult synthesize(const TransformerTTSModel& model, const bert::SpeechBertModel* bert,
                           std::span<const std::size_t> tokens, std::uint32_t speaker_id,
                           std::optional<std::size_t> max_frames = std::nullopt);

// ---- training --------------------------------------------------------------

struct TTSTrainOptions {
  std::size_t steps = 3000;
  std::uint64_t seed = 1;
};

// Teacher-forced Adam steps. Dynamic models precompute their segment
// embeddings from the ground truth with the frozen BERT first.
TransformerTTSModel train_tts(std::span<const features::Utterance> corpus,
                              const bert::SpeechBertModel* bert, const TTSConfig& cfg,
                              const TTSTrainOptions& options,
                              std::vector<double>* loss_history = nullptr);

struct TeacherForcedScore {
  double loss = 0.0;     // mean tts_loss
  double mel_mse = 0.0;  // mean MSE(mel_post, gt)
};

TeacherForcedScore evaluate_tts(const TransformerTTSModel& model,
                                const bert::SpeechBertModel* bert,
                                std::span<const features::Utterance> corpus);

}  // namespace segbert::tts
