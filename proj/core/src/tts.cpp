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

#include "segbert/tts.hpp"

#include <cmath>

#include "segbert/error.hpp"
#include "segbert/optim.hpp"
#include "segbert/parallel.hpp"

namespace segbert::tts {

namespace {
// Dropout stream for pre-nets that stay stochastic outside training.
constexpr std::uint64_t kPrenetSeed = 0x51A7E5EEDULL;
}  // namespace

void TTSConfig::validate() const {
  require(d_model >= 1 && heads >= 1 && d_model % heads == 0, Errc::config,
          "tts: d_model must be divisible by heads");
  require(segment_frames >= 1, Errc::config, "tts: segment_frames must be >= 1");
  require(stop_threshold > 0.0 && stop_threshold < 1.0, Errc::config,
          "tts: stop_threshold must lie in (0, 1)");
  require(max_decode_frames >= 1, Errc::config, "tts: max_decode_frames must be >= 1");
  require(mel_bins >= 1 && vocab_size >= 1 && speaker_count >= 1 && speaker_dim >= 1 &&
              prenet_dim >= 1 && embedding_dim >= 1 && dynamic_projection_dim >= 1 &&
              d_ff >= 1,
          Errc::config, "tts: widths and counts must be positive");
  require(postnet_layers >= 1 && postnet_channels >= 1 && postnet_kernel >= 1, Errc::config,
          "tts: post-net needs at least one layer");
  require(dropout >= 0.0 && dropout < 1.0 && prenet_dropout >= 0.0 && prenet_dropout < 1.0,
          Errc::config, "tts: dropout outside [0, 1)");
  require(learning_rate > 0.0, Errc::config, "tts: learning_rate must be positive");
}

TransformerTTSModel::TransformerTTSModel(const TTSConfig& cfg, std::uint64_t seed)
    : TransformerTTSModel(cfg, Rng(seed)) {}

TransformerTTSModel::TransformerTTSModel(const TTSConfig& cfg, Rng&& rng)
    : cfg_((cfg.validate(), cfg)),
      text_embedding_(params_, "tts.text.embedding", cfg.vocab_size, cfg.d_model, rng),
      text_prenet_(params_, "tts.text.prenet", cfg.d_model, cfg.d_model, rng),
      text_position_(params_, "tts.text.position"),
      text_encoder_(params_, "tts.text.encoder", cfg.encoder_layers, cfg.d_model, cfg.heads,
                    cfg.d_ff, rng),
      speaker_table_(params_, "tts.speaker.table", cfg.speaker_count, cfg.speaker_dim, rng),
      speaker_merge_(params_, "tts.speaker.merge", cfg.d_model + cfg.speaker_dim, cfg.d_model, rng),
      prenet1_(params_, "tts.prenet1", cfg.mel_bins, cfg.prenet_dim, rng),
      prenet2_(params_, "tts.prenet2", cfg.prenet_dim, cfg.prenet_dim, rng),
      decoder_position_(params_, "tts.decoder.position"),
      decoder_(params_, "tts.decoder", cfg.decoder_layers, cfg.d_model, cfg.heads, cfg.d_ff, rng),
      mel_head_(params_, "tts.mel_linear1", cfg.d_model, cfg.mel_bins, rng),
      stop_head_(params_, "tts.stop", cfg.d_model, 1, rng) {
  if (cfg.dynamic_embedding) {
    projection1_.emplace(params_, "tts.dynamic.projection1", cfg.embedding_dim,
                         cfg.dynamic_projection_dim, rng);
    projection2_.emplace(params_, "tts.dynamic.projection2",
                         cfg.dynamic_projection_dim + cfg.prenet_dim, cfg.d_model, rng);
  } else {
    input_projection_.emplace(params_, "tts.input_projection", cfg.prenet_dim, cfg.d_model, rng);
  }
  postnet_.reserve(cfg.postnet_layers);
  for (std::size_t l = 0; l < cfg.postnet_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.mel_bins : cfg.postnet_channels;
    const std::size_t out = l + 1 == cfg.postnet_layers ? cfg.mel_bins : cfg.postnet_channels;
    postnet_.emplace_back(params_, "tts.postnet" + std::to_string(l), in, out,
                          cfg.postnet_kernel, rng);
  }
}

nn::Var TransformerTTSModel::encode_text_without_speaker(nn::Tape& tape,
                                                         std::span<const std::size_t> tokens,
                                                         const nn::RunContext& ctx) const {
  require(!tokens.empty(), Errc::empty_input, "tts: empty token sequence");
  nn::Var x = text_embedding_.forward(tape, tokens);
  x = nn::relu(text_prenet_.forward(x));
  x = text_position_.forward(x);
  return text_encoder_.forward(x, nullptr, ctx);
}

nn::Var TransformerTTSModel::encode_text(nn::Tape& tape, std::span<const std::size_t> tokens,
                                         std::uint32_t speaker_id,
                                         const nn::RunContext& ctx) const {
  const nn::Var states = encode_text_without_speaker(tape, tokens, ctx);
  const std::size_t speaker = speaker_id;
  const nn::Var spk = speaker_table_.forward(tape, std::span<const std::size_t>(&speaker, 1));
  const nn::Var parts[] = {states, nn::repeat_row(spk, tokens.size())};
  return speaker_merge_.forward(nn::concat_cols(parts));
}

nn::Var TransformerTTSModel::prenet(nn::Var frames, const nn::RunContext& ctx) const {
  const nn::RunContext drop{ctx.rng, cfg_.prenet_dropout};
  nn::Var x = drop.apply_dropout(nn::relu(prenet1_.forward(frames)));
  return drop.apply_dropout(nn::relu(prenet2_.forward(x)));
}

nn::Var TransformerTTSModel::concat_dynamic(nn::Var embedding_rows, nn::Var prenet_rows) const {
  require(projection1_.has_value(), Errc::state, "concat_dynamic on a baseline model");
  require(embedding_rows.rows() == prenet_rows.rows(), Errc::dimension,
          "concat_dynamic: embedding and pre-net row counts differ");
  require(prenet_rows.cols() == cfg_.prenet_dim, Errc::dimension,
          "concat_dynamic: pre-net width mismatch");
  const nn::Var parts[] = {projection1_->forward(embedding_rows), prenet_rows};
  return nn::concat_cols(parts);
}

TransformerTTSModel::DecoderOutput TransformerTTSModel::decode(nn::Var inputs, nn::Var memory,
                                                               const nn::RunContext& ctx) const {
  nn::Var x = cfg_.dynamic_embedding ? projection2_->forward(inputs)
                                     : input_projection_->forward(inputs);
  x = decoder_position_.forward(x);
  const nn::Mask causal = nn::Mask::causal(inputs.rows());
  const nn::Var h = decoder_.forward(x, memory, &causal, ctx);
  return {mel_head_.forward(h), stop_head_.forward(h)};
}

nn::Var TransformerTTSModel::refine(nn::Var mel1) const {
  nn::Var h = mel1;
  for (std::size_t l = 0; l < postnet_.size(); ++l) {
    h = postnet_[l].forward(h);
    if (l + 1 < postnet_.size()) h = nn::tanh(h);
  }
  return nn::add(mel1, h);
}

TransformerTTSModel::TeacherForced TransformerTTSModel::forward_teacher_forced(
    nn::Tape& tape, std::span<const std::size_t> tokens, std::uint32_t speaker_id,
    const Tensor& gt_mel, std::span<const Tensor> embeddings, const nn::RunContext& ctx) const {
  const std::size_t frames = gt_mel.rows();
  require(frames >= 1, Errc::empty_input, "tts: empty ground-truth mel");
  require(gt_mel.cols() == cfg_.mel_bins, Errc::dimension,
          "tts: expected " + std::to_string(cfg_.mel_bins) + " mel bins, got " +
              gt_mel.shape_string());
  const nn::Var memory = encode_text(tape, tokens, speaker_id, ctx);

  Tensor shifted(frames, cfg_.mel_bins);
  for (std::size_t t = 1; t < frames; ++t) {
    const auto src = gt_mel.row(t - 1);
    std::copy(src.begin(), src.end(), shifted.row(t).begin());
  }
  nn::Var inputs = prenet(tape.constant(std::move(shifted)), ctx);

  if (cfg_.dynamic_embedding) {
    const std::size_t ts = cfg_.segment_frames;
    const std::size_t segments = (frames + ts - 1) / ts;
    require(embeddings.size() == segments, Errc::dimension,
            "tts: " + std::to_string(embeddings.size()) + " segment embeddings for " +
                std::to_string(segments) + " segments");
    Tensor rows(frames, cfg_.embedding_dim);
    for (std::size_t t = 0; t < frames; ++t) {
      const Tensor& e = embeddings[t / ts];
      require(e.cols() == cfg_.embedding_dim && t % ts < e.rows(), Errc::dimension,
              "tts: segment embedding " + std::to_string(t / ts) + " has shape " +
                  e.shape_string());
      const auto src = e.row(t % ts);
      std::copy(src.begin(), src.end(), rows.row(t).begin());
    }
    inputs = concat_dynamic(tape.constant(std::move(rows)), inputs);
  }

  const DecoderOutput out = decode(inputs, memory, ctx);
  return {out.mel1, refine(out.mel1), out.stop_logits};
}

std::vector<Tensor> teacher_embeddings(const bert::SpeechBertModel& bert, const Tensor& gt_mel,
                                       std::size_t segment_frames) {
  require(segment_frames >= 1, Errc::config, "segment_frames must be >= 1");
  const std::size_t frames = gt_mel.rows();
  const std::size_t segments = (frames + segment_frames - 1) / segment_frames;
  std::vector<Tensor> out;
  out.reserve(segments);
  if (segments == 0) return out;
  out.emplace_back(segment_frames, bert.config().embedding_dim());
  for (std::size_t k = 1; k < segments; ++k) {
    const std::size_t begin = (k - 1) * segment_frames;
    const std::size_t end = std::min(frames, begin + segment_frames);
    out.push_back(bert.extract_embedding(gt_mel.slice_rows(begin, end)));
  }
  return out;
}

std::vector<double> stop_targets(std::size_t frames) {
  std::vector<double> y(frames, 0.0);
  if (frames > 0) y.back() = 1.0;
  return y;
}

nn::Var tts_loss(nn::Var mel1, nn::Var mel_post, nn::Var stop_logits, nn::Var gt_mel,
                 std::span<const double> gt_stop) {
  const nn::Var mel_terms = nn::add(nn::mse(mel1, gt_mel), nn::mse(mel_post, gt_mel));
  return nn::add(mel_terms, nn::bce_with_logits(stop_logits, gt_stop));
}

InferenceResult run_inference(const InferenceSettings& settings, const InferenceHooks& hooks) {
  require(settings.segment_frames >= 1 && settings.max_frames >= 1, Errc::config,
          "inference needs segment_frames >= 1 and max_frames >= 1");
  require(settings.stop_threshold > 0.0 && settings.stop_threshold < 1.0, Errc::config,
          "stop_threshold must lie in (0, 1)");
  require(static_cast<bool>(hooks.prenet) && static_cast<bool>(hooks.decode), Errc::state,
          "inference hooks missing pre-net or decoder");
  const bool dynamic = settings.dynamic_embedding;
  require(!dynamic || (hooks.project_embedding && hooks.encode_segment), Errc::state,
          "dynamic inference needs projection and speech-encoder hooks");

  InferenceResult result;
  InferenceState& s = result.state;
  InferenceTrace& trace = result.trace;
  s.E = Tensor(settings.segment_frames, settings.embedding_dim);
  s.O = Tensor(1, settings.mel_bins);
  s.Q = Tensor(0, settings.mel_bins);

  while (true) {
    const Tensor o_in = hooks.prenet(s.O.slice_rows(s.t, s.t + 1));
    Tensor row = o_in;
    if (dynamic) {
      const Tensor e_in = hooks.project_embedding(s.E.slice_rows(s.i, s.i + 1));
      row = Tensor(1, e_in.cols() + o_in.cols());
      std::copy(e_in.values().begin(), e_in.values().end(), row.values().begin());
      std::copy(o_in.values().begin(), o_in.values().end(),
                row.values().begin() + static_cast<std::ptrdiff_t>(e_in.cols()));
    }
    s.I.append_row(row.values());
    const auto [next, stop_logit] = hooks.decode(s.I);
    require(next.size() == settings.mel_bins, Errc::dimension,
            "decoder emitted a frame of " + next.shape_string());
    s.O.append_row(next.values());
    s.Q.append_row(next.values());
    trace.zero_embedding.push_back(dynamic && s.embeddings_are_zero);
    ++s.i;
    ++s.t;
    if (1.0 / (1.0 + std::exp(-stop_logit)) > settings.stop_threshold) {
      trace.stopped = true;
      break;
    }
    if (s.t >= settings.max_frames) {
      trace.truncated = true;
      break;
    }
    if (s.i % settings.segment_frames == 0) {
      if (dynamic) {
        Tensor fresh = hooks.encode_segment(s.Q);
        require(fresh.rows() == s.Q.rows() && fresh.cols() == settings.embedding_dim,
                Errc::dimension, "speech encoder returned " + fresh.shape_string());
        trace.refreshes.push_back({s.t, s.t - s.Q.rows() + 1, s.t, s.Q});
        s.E = std::move(fresh);
        s.embeddings_are_zero = false;
      }
      s.Q = Tensor(0, settings.mel_bins);
      s.i = 0;
    }
  }
  result.frames = s.O.slice_rows(1, s.O.rows());
  return result;
}

SynthesisResult synthesize(const TransformerTTSModel& model, const bert::SpeechBertModel* bert,
                           std::span<const std::size_t> tokens, std::uint32_t speaker_id,
                           std::optional<std::size_t> max_frames) {
  const TTSConfig& cfg = model.config();
  if (cfg.dynamic_embedding) {
    require(bert != nullptr, Errc::state, "dynamic synthesis requires a speech BERT");
    require(bert->config().embedding_dim() == cfg.embedding_dim &&
                bert->config().mel_bins == cfg.mel_bins,
            Errc::dimension, "speech BERT widths do not match the TTS model");
  }
  Tensor memory;
  {
    nn::Tape tape(false);
    memory = model.encode_text(tape, tokens, speaker_id).value();
  }
  Rng prenet_rng(kPrenetSeed);
  const nn::RunContext prenet_ctx =
      cfg.prenet_dropout_always ? nn::RunContext{&prenet_rng, 0.0} : nn::RunContext{};

  InferenceHooks hooks;
  hooks.prenet = [&](const Tensor& o) {
    nn::Tape tape(false);
    return model.prenet(tape.constant(o), prenet_ctx).value();
  };
  hooks.decode = [&](const Tensor& inputs) {
    nn::Tape tape(false);
    const auto out = model.decode(tape.constant(inputs), tape.constant(memory));
    const Tensor& mel1 = out.mel1.value();
    const Tensor& stop = out.stop_logits.value();
    return std::make_pair(mel1.slice_rows(mel1.rows() - 1, mel1.rows()), stop[stop.size() - 1]);
  };
  if (cfg.dynamic_embedding) {
    hooks.project_embedding = [&](const Tensor& e) {
      nn::Tape tape(false);
      const nn::Var zero_prenet = tape.constant(Tensor(e.rows(), cfg.prenet_dim));
      const nn::Var joined = model.concat_dynamic(tape.constant(e), zero_prenet);
      return nn::slice_cols(joined, 0, cfg.dynamic_projection_dim).value();
    };
    hooks.encode_segment = [bert](const Tensor& q) { return bert->extract_embedding(q); };
  }

  InferenceSettings settings;
  settings.segment_frames = cfg.segment_frames;
  settings.embedding_dim = cfg.embedding_dim;
  settings.mel_bins = cfg.mel_bins;
  settings.dynamic_embedding = cfg.dynamic_embedding;
  settings.stop_threshold = cfg.stop_threshold;
  settings.max_frames = max_frames.value_or(cfg.max_decode_frames);
  InferenceResult run = run_inference(settings, hooks);

  SynthesisResult out;
  nn::Tape tape(false);
  out.mel.frames = model.refine(tape.constant(run.frames)).value();
  out.mel1 = std::move(run.frames);
  out.trace = std::move(run.trace);
  return out;
}

namespace {

void check_bert_compatible(const TTSConfig& cfg, const bert::SpeechBertModel* bert) {
  if (!cfg.dynamic_embedding) return;
  require(bert != nullptr, Errc::state, "dynamic TTS needs a frozen speech BERT");
  require(bert->config().embedding_dim() == cfg.embedding_dim, Errc::dimension,
          "speech BERT embedding width " + std::to_string(bert->config().embedding_dim()) +
              " differs from tts embedding_dim " + std::to_string(cfg.embedding_dim));
  require(bert->config().mel_bins == cfg.mel_bins, Errc::dimension,
          "speech BERT and TTS disagree on mel bins");
}

std::vector<std::vector<Tensor>> embedding_cache(std::span<const features::Utterance> corpus,
                                                 const bert::SpeechBertModel* bert,
                                                 const TTSConfig& cfg) {
  std::vector<std::vector<Tensor>> cache(corpus.size());
  if (!cfg.dynamic_embedding) return cache;
  parallel_for(corpus.size(), [&](std::size_t k) {
    cache[k] = teacher_embeddings(*bert, corpus[k].mel.frames, cfg.segment_frames);
  });
  return cache;
}

}  // namespace

TransformerTTSModel train_tts(std::span<const features::Utterance> corpus,
                              const bert::SpeechBertModel* bert, const TTSConfig& cfg,
                              const TTSTrainOptions& options, std::vector<double>* loss_history) {
  require(!corpus.empty(), Errc::empty_input, "train_tts on an empty corpus");
  check_bert_compatible(cfg, bert);
  TransformerTTSModel model(cfg, options.seed);
  const auto cache = embedding_cache(corpus, bert, cfg);
  nn::Adam adam(model.params(), {.learning_rate = cfg.learning_rate});
  Rng rng(options.seed ^ 0x7F4A7C159E3779B9ULL);
  Rng dropout_rng(rng.fork_seed());
  const nn::RunContext ctx{&dropout_rng, cfg.dropout};
  for (std::size_t step = 0; step < options.steps; ++step) {
    const std::size_t k = rng.index(corpus.size());
    const auto& u = corpus[k];
    model.params().zero_grad();
    nn::Tape tape;
    const auto out = model.forward_teacher_forced(tape, u.phonemes, u.speaker_id, u.mel.frames,
                                                  cache[k], ctx);
    const auto targets = stop_targets(u.mel.num_frames());
    const nn::Var loss = tts_loss(out.mel1, out.mel_post, out.stop_logits,
                                  tape.constant(u.mel.frames), targets);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) fail(Errc::poisoned_gradient, "tts loss diverged on " + u.id);
    tape.backward(loss);
    adam.step();
    if (loss_history != nullptr) loss_history->push_back(value);
  }
  return model;
}

TeacherForcedScore evaluate_tts(const TransformerTTSModel& model,
                                const bert::SpeechBertModel* bert,
                                std::span<const features::Utterance> corpus) {
  require(!corpus.empty(), Errc::empty_input, "evaluate_tts on an empty corpus");
  check_bert_compatible(model.config(), bert);
  const auto cache = embedding_cache(corpus, bert, model.config());
  std::vector<TeacherForcedScore> per(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t k) {
    const auto& u = corpus[k];
    nn::Tape tape(false);
    Rng prenet_rng(kPrenetSeed + k);
    const nn::RunContext ctx = model.config().prenet_dropout_always
                                   ? nn::RunContext{&prenet_rng, 0.0}
                                   : nn::RunContext{};
    const auto out = model.forward_teacher_forced(tape, u.phonemes, u.speaker_id, u.mel.frames,
                                                  cache[k], ctx);
    const nn::Var gt = tape.constant(u.mel.frames);
    const auto targets = stop_targets(u.mel.num_frames());
    per[k].loss = tts_loss(out.mel1, out.mel_post, out.stop_logits, gt, targets).value()[0];
    per[k].mel_mse = nn::mse(out.mel_post, gt).value()[0];
  });
  TeacherForcedScore total;
  for (const auto& s : per) {
    total.loss += s.loss;
    total.mel_mse += s.mel_mse;
  }
  total.loss /= static_cast<double>(corpus.size());
  total.mel_mse /= static_cast<double>(corpus.size());
  return total;
}

}  // namespace segbert::tts
