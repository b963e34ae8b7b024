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

#include "segbert/speech_bert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "segbert/error.hpp"
#include "segbert/optim.hpp"

namespace segbert::bert {

void SpeechBertConfig::validate() const {
  require(d_model >= 1 && heads >= 1 && d_model % heads == 0, Errc::config,
          "bert: d_model must be divisible by heads");
  require(mask_rate >= 0.0 && mask_rate <= 1.0, Errc::config, "bert: mask_rate outside [0, 1]");
  require(mel_bins >= 1 && vocab_size >= 1 && d_ff >= 1 && max_frames >= 1, Errc::config,
          "bert: widths and sizes must be positive");
  require(dropout >= 0.0 && dropout < 1.0, Errc::config, "bert: dropout outside [0, 1)");
  require(learning_rate > 0.0, Errc::config, "bert: learning_rate must be positive");
}

MaskPlan plan_masks(const features::AlignmentRecord& alignment, double rate, std::uint64_t seed,
                    bool exact_count) {
  require(rate >= 0.0 && rate <= 1.0, Errc::config, "mask rate outside [0, 1]");
  const auto spans = features::syllable_frame_spans(alignment);
  MaskPlan plan;
  plan.seed = seed;
  Rng rng(seed);
  if (exact_count) {
    const auto want = static_cast<std::size_t>(std::llround(rate * static_cast<double>(spans.size())));
    std::vector<std::size_t> order(spans.size());
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates, then restore temporal order.
    for (std::size_t k = 0; k < want; ++k)
      std::swap(order[k], order[k + rng.index(order.size() - k)]);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
    for (std::size_t k = 0; k < want; ++k) plan.spans.push_back(spans[order[k]]);
    return plan;
  }
  for (const auto& span : spans)
    if (rng.bernoulli(rate)) plan.spans.push_back(span);
  return plan;
}

features::MelSpectrogram apply_masks(const features::MelSpectrogram& mel, const MaskPlan& plan,
                                     const templ::AcousticTemplate& tmpl) {
  require(plan.spans.empty() || tmpl.frames.cols() == mel.bins(), Errc::dimension,
          "template bins do not match the mel");
  features::MelSpectrogram out = mel;
  for (std::size_t s = 0; s < plan.spans.size(); ++s) {
    const auto [start, end] = plan.spans[s];
    if (start >= end || end > mel.num_frames())
      fail_at(Errc::bounds, s,
              "mask span [" + std::to_string(start) + ", " + std::to_string(end) +
                  ") outside a " + std::to_string(mel.num_frames()) + "-frame mel");
    const Tensor filler = templ::pad_mask(tmpl, end - start);
    for (std::uint32_t t = start; t < end; ++t) {
      const auto src = filler.row(t - start);
      std::copy(src.begin(), src.end(), out.frames.row(t).begin());
    }
  }
  return out;
}

SpeechBertModel::SpeechBertModel(const SpeechBertConfig& cfg, std::uint64_t seed)
    : SpeechBertModel(cfg, Rng(seed)) {}

SpeechBertModel::SpeechBertModel(const SpeechBertConfig& cfg, Rng&& rng)
    : cfg_((cfg.validate(), cfg)),
      text_embedding_(params_, "bert.text.embedding", cfg.vocab_size, cfg.d_model, rng),
      text_position_(params_, "bert.text.position"),
      text_encoder_(params_, "bert.text.encoder", cfg.text_layers, cfg.d_model, cfg.heads,
                    cfg.d_ff, rng),
      speech_prenet1_(params_, "bert.speech.prenet1", cfg.mel_bins, cfg.d_model, rng),
      speech_prenet2_(params_, "bert.speech.prenet2", cfg.d_model, cfg.d_model, rng),
      speech_position_(params_, "bert.speech.position"),
      speech_encoder_(params_, "bert.speech.encoder", cfg.speech_layers, cfg.d_model, cfg.heads,
                      cfg.d_ff, rng),
      decoder_(params_, "bert.decoder", cfg.decoder_layers, cfg.d_model, cfg.heads, cfg.d_ff, rng),
      mel_head_(params_, "bert.mel_head", cfg.d_model, cfg.mel_bins, rng) {}

nn::Var SpeechBertModel::encode_speech(nn::Tape& tape, const Tensor& mel,
                                       const nn::RunContext& ctx) const {
  require(mel.rows() >= 1, Errc::empty_input, "speech encoder input has no frames");
  require(mel.rows() <= cfg_.max_frames, Errc::bounds,
          "mel of " + std::to_string(mel.rows()) + " frames exceeds max_frames " +
              std::to_string(cfg_.max_frames));
  require(mel.cols() == cfg_.mel_bins, Errc::dimension,
          "speech encoder expects " + std::to_string(cfg_.mel_bins) + " bins, got " +
              mel.shape_string());
  nn::Var x = tape.constant(mel);
  x = nn::relu(speech_prenet1_.forward(x));
  x = nn::relu(speech_prenet2_.forward(x));
  x = speech_position_.forward(x);
  return speech_encoder_.forward(x, nullptr, ctx);
}

SpeechBertModel::Output SpeechBertModel::forward(nn::Tape& tape, std::span<const std::size_t> text,
                                                 const Tensor& masked_mel,
                                                 const nn::RunContext& ctx) const {
  require(!text.empty(), Errc::empty_input, "bert forward with empty text");
  nn::Var t = text_embedding_.forward(tape, text);
  t = text_position_.forward(t);
  const nn::Var memory = text_encoder_.forward(t, nullptr, ctx);
  const nn::Var states = encode_speech(tape, masked_mel, ctx);
  const nn::Var decoded = decoder_.forward(states, memory, nullptr, ctx);
  return {mel_head_.forward(decoded), states};
}

Tensor SpeechBertModel::extract_embedding(const Tensor& segment) const {
  require(segment.rows() >= 1, Errc::empty_input, "extract_embedding on an empty segment");
  nn::Tape tape(false);
  return encode_speech(tape, segment).value();
}

nn::Var bert_loss(nn::Var recon, nn::Var ground_truth, std::span<const double> frame_weights) {
  if (frame_weights.empty()) return nn::mse(recon, ground_truth);
  return nn::weighted_mse(recon, ground_truth, frame_weights);
}

std::vector<double> masked_frame_weights(std::size_t frames, const MaskPlan& plan) {
  std::vector<double> w(frames, 0.0);
  for (const auto& [start, end] : plan.spans)
    for (std::uint32_t t = start; t < end && t < frames; ++t) w[t] = 1.0;
  return w;
}

namespace {

double step_loss(const SpeechBertModel& model, nn::Tape& tape, const features::Utterance& u,
                 const MaskPlan& plan, const templ::AcousticTemplate& tmpl,
                 const nn::RunContext& ctx, bool backprop) {
  const auto masked = apply_masks(u.mel, plan, tmpl);
  const auto out = model.forward(tape, u.phonemes, masked.frames, ctx);
  const nn::Var target = tape.constant(u.mel.frames);
  std::vector<double> weights;
  if (model.config().masked_only_loss) weights = masked_frame_weights(u.mel.num_frames(), plan);
  const nn::Var loss = bert_loss(out.recon, target, weights);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) fail(Errc::poisoned_gradient, "bert loss diverged on " + u.id);
  if (backprop) tape.backward(loss);
  return value;
}

}  // namespace

SpeechBertModel train_bert(std::span<const features::Utterance> corpus,
                           const templ::AcousticTemplate& tmpl, const SpeechBertConfig& cfg,
                           const BertTrainOptions& options, std::vector<double>* loss_history) {
  require(!corpus.empty(), Errc::empty_input, "train_bert on an empty corpus");
  SpeechBertModel model(cfg, options.seed);
  nn::Adam adam(model.params(), {.learning_rate = cfg.learning_rate});
  Rng rng(options.seed ^ 0xB5297A4D3F84D5B5ULL);
  Rng dropout_rng(rng.fork_seed());
  const nn::RunContext ctx{&dropout_rng, cfg.dropout};
  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto& u = corpus[rng.index(corpus.size())];
    const MaskPlan plan = plan_masks(u.alignment, cfg.mask_rate, rng.next(), cfg.exact_count_masking);
    model.params().zero_grad();
    nn::Tape tape;
    const double loss = step_loss(model, tape, u, plan, tmpl, ctx, true);
    adam.step();
    if (loss_history != nullptr) loss_history->push_back(loss);
  }
  return model;
}

double evaluate_bert(const SpeechBertModel& model, std::span<const features::Utterance> corpus,
                     const templ::AcousticTemplate& tmpl, std::uint64_t mask_seed) {
  require(!corpus.empty(), Errc::empty_input, "evaluate_bert on an empty corpus");
  Rng rng(mask_seed);
  double total = 0.0;
  for (const auto& u : corpus) {
    const auto& cfg = model.config();
    const MaskPlan plan = plan_masks(u.alignment, cfg.mask_rate, rng.next(), cfg.exact_count_masking);
    nn::Tape tape(false);
    total += step_loss(model, tape, u, plan, tmpl, {}, false);
  }
  return total / static_cast<double>(corpus.size());
}

}  // namespace segbert::bert
