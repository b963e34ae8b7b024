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

#include <doctest.h>

#include <cmath>
#include <vector>

#include "segbert/error.hpp"
#include "segbert/toy_corpus.hpp"
#include "segbert/tts.hpp"
#include "support.hpp"

using namespace segbert;
using namespace segbert::tts;
using segbert::nn::Tape;
using segbert::nn::Var;
using segbert::testing::random_matrix;

namespace {

Errc error_code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected segbert::Error");
  return Errc::state;
}

TTSConfig tiny_tts(bool dynamic) {
  TTSConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.encoder_layers = cfg.decoder_layers = 1;
  cfg.d_ff = 16;
  cfg.mel_bins = 3;
  cfg.vocab_size = 5;
  cfg.speaker_count = 2;
  cfg.speaker_dim = 4;
  cfg.prenet_dim = 6;
  cfg.segment_frames = 4;
  cfg.embedding_dim = 8;
  cfg.postnet_layers = 2;
  cfg.postnet_channels = 4;
  cfg.postnet_kernel = 3;
  cfg.dynamic_embedding = dynamic;
  cfg.max_decode_frames = 30;
  return cfg;
}

bert::SpeechBertConfig tiny_bert() {
  bert::SpeechBertConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.text_layers = cfg.speech_layers = cfg.decoder_layers = 1;
  cfg.d_ff = 16;
  cfg.mel_bins = 3;
  cfg.vocab_size = 5;
  return cfg;
}

const std::vector<std::size_t> kText{1, 3, 0, 4};

Tensor mel1_of(const TransformerTTSModel& m, const Tensor& gt, std::span<const Tensor> emb) {
  Tape tape(false);
  return m.forward_teacher_forced(tape, kText, 0, gt, emb).mel1.value();
}

// Stub pieces for the inference loop: the "decoder" emits frame values that
// encode the global frame index, and stops at a chosen t.
struct StubRun {
  std::size_t stop_at;
  std::size_t project_calls = 0;
  std::vector<Tensor> projected_inputs;

  InferenceHooks hooks() {
    InferenceHooks h;
    h.prenet = [](const Tensor& o) { return o; };
    h.project_embedding = [this](const Tensor& e) {
      ++project_calls;
      projected_inputs.push_back(e);
      return Tensor(1, 2, 0.5);
    };
    h.decode = [this](const Tensor& inputs) {
      const double t = static_cast<double>(inputs.rows());  // emitting o_t
      Tensor o(1, 3, t);
      return std::pair<Tensor, double>{o, inputs.rows() == stop_at ? 50.0 : -50.0};
    };
    h.encode_segment = [](const Tensor& q) {
      Tensor e(q.rows(), 4);
      for (std::size_t r = 0; r < q.rows(); ++r) e(r, 0) = q(r, 0);
      return e;
    };
    return h;
  }
};

InferenceSettings stub_settings(std::size_t ts = 20, std::size_t max_frames = 1000) {
  InferenceSettings s;
  s.segment_frames = ts;
  s.embedding_dim = 4;
  s.mel_bins = 3;
  s.max_frames = max_frames;
  return s;
}

}  // namespace

TEST_SUITE("encode_text") {
  TEST_CASE("one state per token and speakers are injected") {
    TransformerTTSModel m(tiny_tts(false), 3);
    Tape tape(false);
    Var a = m.encode_text(tape, kText, 0);
    Var b = m.encode_text(tape, kText, 1);
    CHECK(a.rows() == kText.size());
    CHECK(a.cols() == 8);
    CHECK(a.value() != b.value());
  }

  TEST_CASE("zero speaker row and identity merge reduce to the plain encoder") {
    TransformerTTSModel m(tiny_tts(false), 4);
    m.speaker_table().table().value.fill(0.0);
    Tensor& w = m.speaker_merge().weight().value;  // d_model x (d_model + speaker_dim)
    w.fill(0.0);
    for (std::size_t i = 0; i < 8; ++i) w(i, i) = 1.0;
    m.speaker_merge().bias()->value.fill(0.0);
    Tape tape(false);
    const Tensor with_speaker = m.encode_text(tape, kText, 1).value();
    const Tensor plain = m.encode_text_without_speaker(tape, kText).value();
    CHECK(with_speaker == plain);
  }

  TEST_CASE("unknown token or speaker") {
    TransformerTTSModel m(tiny_tts(false), 4);
    Tape tape(false);
    std::vector<std::size_t> bad{1, 9};
    CHECK(error_code_of([&] { m.encode_text(tape, bad, 0); }) == Errc::vocabulary);
    CHECK(error_code_of([&] { m.encode_text(tape, kText, 2); }) == Errc::vocabulary);
  }
}

TEST_SUITE("concat_dynamic") {
  TEST_CASE("zero embedding with zero bias gives a zero prefix") {
    TransformerTTSModel m(tiny_tts(true), 5);
    m.projection1().bias()->value.fill(0.0);
    Rng rng(1);
    Tape tape(false);
    Var out = m.concat_dynamic(tape.constant(Tensor(2, 8)), tape.constant(random_matrix(2, 6, rng)));
    CHECK(out.cols() == 80 + 6);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 80; ++c) CHECK(out.value()(r, c) == 0.0);
  }

  TEST_CASE("unit embedding sums each projection row") {
    TransformerTTSModel m(tiny_tts(true), 5);
    Tensor& w = m.projection1().weight().value;  // 80 x d_E
    for (std::size_t r = 0; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = 0.25 * static_cast<double>(r) - 0.5 * c;
    m.projection1().bias()->value.fill(0.0);
    Tape tape(false);
    Tensor prenet_part = Tensor::matrix({{1, 2, 3, 4, 5, 6}});
    Var out = m.concat_dynamic(tape.constant(Tensor(1, 8, 1.0)), tape.constant(prenet_part));
    for (std::size_t r = 0; r < 80; ++r) {
      // sum_c (0.25 r - 0.5 c) over c = 0..7
      CHECK(out.value()(0, r) == doctest::Approx(8 * 0.25 * static_cast<double>(r) - 0.5 * 28));
    }
    for (std::size_t c = 0; c < 6; ++c) CHECK(out.value()(0, 80 + c) == prenet_part[c]);
  }

  TEST_CASE("width mismatch") {
    TransformerTTSModel m(tiny_tts(true), 5);
    Tape tape(false);
    CHECK(error_code_of([&] { m.concat_dynamic(tape.constant(Tensor(1, 7)), tape.constant(Tensor(1, 6))); }) ==
          Errc::dimension);
  }
}

TEST_SUITE("teacher_forced") {
  TEST_CASE("baseline ignores embeddings and has no dynamic parameters") {
    TransformerTTSModel m(tiny_tts(false), 6);
    for (const nn::Parameter* p : std::as_const(m.params()).all())
      CHECK(p->name.find("dynamic") == std::string::npos);
    Rng rng(2);
    Tensor gt = random_matrix(9, 3, rng);
    std::vector<Tensor> junk{random_matrix(4, 8, rng), random_matrix(4, 8, rng)};
    CHECK(mel1_of(m, gt, {}) == mel1_of(m, gt, junk));
  }

  TEST_CASE("decoder is causal in the ground truth") {
    for (bool dynamic : {false, true}) {
      TransformerTTSModel m(tiny_tts(dynamic), 7);
      Rng rng(3);
      Tensor gt = random_matrix(10, 3, rng);
      std::vector<Tensor> emb;
      if (dynamic)
        for (int k = 0; k < 3; ++k) emb.push_back(random_matrix(4, 8, rng));
      Tensor base = mel1_of(m, gt, emb);
      for (std::size_t t = 0; t < 10; ++t) {
        Tensor moved = gt;
        moved(t, 1) += 2.0;
        Tensor out = mel1_of(m, moved, emb);
        // Input row t+1 carries ground-truth frame t, so outputs 0..t stay put.
        for (std::size_t r = 0; r <= t; ++r)
          for (std::size_t c = 0; c < 3; ++c) CHECK(out(r, c) == base(r, c));
        if (t + 1 < 10) {
          bool changed = false;
          for (std::size_t c = 0; c < 3; ++c) changed |= out(t + 1, c) != base(t + 1, c);
          CHECK(changed);
        }
      }
    }
  }

  TEST_CASE("segment embeddings steer the frames of their own segment") {
    TransformerTTSModel m(tiny_tts(true), 8);
    Rng rng(4);
    Tensor gt = random_matrix(10, 3, rng);
    std::vector<Tensor> emb{Tensor(4, 8), random_matrix(4, 8, rng), random_matrix(2, 8, rng)};
    Tensor base = mel1_of(m, gt, emb);
    emb[1](0, 0) += 1.0;  // first frame of segment 1 is frame 4
    Tensor out = mel1_of(m, gt, emb);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 3; ++c) CHECK(out(r, c) == base(r, c));
    bool changed = false;
    for (std::size_t c = 0; c < 3; ++c) changed |= out(4, c) != base(4, c);
    CHECK(changed);
  }

  TEST_CASE("embedding count must match the segment count") {
    TransformerTTSModel m(tiny_tts(true), 8);
    Tensor gt(10, 3);
    std::vector<Tensor> two{Tensor(4, 8), Tensor(4, 8)};
    CHECK(error_code_of([&] { mel1_of(m, gt, two); }) == Errc::dimension);
    CHECK(error_code_of([&] { mel1_of(m, gt, {}); }) == Errc::dimension);
  }

  TEST_CASE("post-net is residual") {
    TransformerTTSModel m(tiny_tts(false), 9);
    for (nn::Parameter* p : m.params().all())
      if (p->name.rfind("tts.postnet", 0) == 0) p->value.fill(0.0);
    Rng rng(5);
    Tensor gt = random_matrix(6, 3, rng);
    Tape tape(false);
    auto out = m.forward_teacher_forced(tape, kText, 0, gt, {});
    CHECK(out.mel_post.value() == out.mel1.value());
    CHECK(out.stop_logits.rows() == 6);
    Var g = tape.constant(gt);
    auto stops = stop_targets(6);
    const double mel_terms = tts_loss(out.mel1, out.mel_post, out.stop_logits, g, stops).value()[0] -
                             nn::bce_with_logits(out.stop_logits, stops).value()[0];
    CHECK(mel_terms == doctest::Approx(2.0 * nn::mse(out.mel1, g).value()[0]).epsilon(1e-14));
  }
}

TEST_SUITE("tts_loss") {
  TEST_CASE("perfect saturated predictions approach zero") {
    Tape tape(false);
    Var gt = tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
    Var logits = tape.constant(Tensor::matrix({{-40.0}, {-40.0}, {40.0}}));
    CHECK(tts_loss(gt, gt, logits, gt, stop_targets(3)).value()[0] < 1e-15);
  }

  TEST_CASE("two-frame case against a scalar oracle") {
    const Tensor mel1 = Tensor::matrix({{0.5, -1.0}, {2.0, 0.0}});
    const Tensor post = Tensor::matrix({{0.0, -0.5}, {1.5, 1.0}});
    const Tensor gt = Tensor::matrix({{0.0, -1.0}, {1.0, 1.0}});
    const std::vector<double> logits{-0.3, 1.2};
    const std::vector<double> targets{0.0, 1.0};
    double m1 = 0.0, m2 = 0.0, bce = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      m1 += (mel1[i] - gt[i]) * (mel1[i] - gt[i]) / 4.0;
      m2 += (post[i] - gt[i]) * (post[i] - gt[i]) / 4.0;
    }
    for (std::size_t t = 0; t < 2; ++t) {
      const double p = 1.0 / (1.0 + std::exp(-logits[t]));
      bce -= (targets[t] * std::log(p) + (1.0 - targets[t]) * std::log(1.0 - p)) / 2.0;
    }
    Tape tape(false);
    Var loss = tts_loss(tape.constant(mel1), tape.constant(post),
                        tape.constant(Tensor::matrix(2, 1, logits)), tape.constant(gt), targets);
    CHECK(loss.value()[0] == doctest::Approx(m1 + m2 + bce).epsilon(1e-13));
  }

  TEST_CASE("stop targets and shape errors") {
    CHECK(stop_targets(4) == std::vector<double>{0, 0, 0, 1});
    Tape tape(false);
    Var a = tape.constant(Tensor(2, 2)), b = tape.constant(Tensor(3, 2));
    Var logits = tape.constant(Tensor(2, 1));
    CHECK(error_code_of([&] { tts_loss(a, a, logits, b, stop_targets(2)); }) == Errc::dimension);
  }
}

TEST_SUITE("teacher_embeddings") {
  TEST_CASE("count, zero first entry and provenance") {
    bert::SpeechBertModel b(tiny_bert(), 3);
    Rng rng(6);
    Tensor gt = random_matrix(10, 3, rng);
    auto emb = teacher_embeddings(b, gt, 4);
    REQUIRE(emb.size() == 3);  // ceil(10 / 4)
    CHECK(emb[0] == Tensor(4, 8));
    CHECK(emb[1] == b.extract_embedding(gt.slice_rows(0, 4)));
    CHECK(emb[2] == b.extract_embedding(gt.slice_rows(4, 8)));

    for (std::size_t t = 0; t < 10; ++t) {
      Tensor moved = gt;
      moved(t, 2) += 1.0;
      auto other = teacher_embeddings(b, moved, 4);
      const std::size_t owner = t / 4 + 1;  // the entry built from t's segment
      for (std::size_t k = 0; k < 3; ++k) {
        if (k == owner)
          CHECK(other[k] != emb[k]);
        else
          CHECK(other[k] == emb[k]);
      }
    }
  }
}

TEST_SUITE("inference") {
  TEST_CASE("stop at the first frame") {
    StubRun stub{1};
    InferenceResult r = run_inference(stub_settings(), stub.hooks());
    CHECK(r.frames.rows() == 1);
    CHECK(r.trace.refreshes.empty());
    CHECK(r.trace.stopped);
    CHECK(r.trace.zero_embedding == std::vector<bool>{true});
    REQUIRE(stub.projected_inputs.size() == 1);
    CHECK(stub.projected_inputs[0] == Tensor(1, 4));
  }

  TEST_CASE("stop at t=45 with T_S=20") {
    StubRun stub{45};
    InferenceResult r = run_inference(stub_settings(), stub.hooks());
    CHECK(r.frames.rows() == 45);
    CHECK(r.state.t == 45);
    CHECK(r.state.O.rows() == 46);
    REQUIRE(r.trace.refreshes.size() == 2);
    CHECK(r.trace.refreshes[0].first_frame == 1);
    CHECK(r.trace.refreshes[0].last_frame == 20);
    CHECK(r.trace.refreshes[1].first_frame == 21);
    CHECK(r.trace.refreshes[1].last_frame == 40);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(r.trace.refreshes[k].inputs == r.state.O.slice_rows(1 + 20 * k, 21 + 20 * k));
    for (std::size_t t = 0; t < 45; ++t) CHECK(r.trace.zero_embedding[t] == (t < 20));
    for (std::size_t t = 0; t < 20; ++t) CHECK(stub.projected_inputs[t] == Tensor(1, 4));
    // Frame 21 reads row 0 of the embedding computed from frames 1..20.
    CHECK(stub.projected_inputs[20](0, 0) == 1.0);
    CHECK(stub.projected_inputs[40](0, 0) == 21.0);
  }

  TEST_CASE("refresh cadence over stop positions") {
    for (std::size_t ts : {1u, 3u, 20u})
      for (std::size_t stop = 1; stop <= 70; ++stop) {
        StubRun stub{stop};
        InferenceResult r = run_inference(stub_settings(ts), stub.hooks());
        // A refresh happens after every completed segment except when the
        // loop ends on that same frame.
        CHECK(r.trace.refreshes.size() == (stop - 1) / ts);
        if (stop % ts != 0) CHECK(r.trace.refreshes.size() == stop / ts);
        // i is reset at every refresh, so only a loop that ended exactly on a
        // segment boundary leaves it at T_S.
        CHECK(r.state.i == (stop % ts == 0 ? ts : stop % ts));
      }
  }

  TEST_CASE("truncation at max frames") {
    StubRun stub{1000000};
    InferenceResult r = run_inference(stub_settings(20, 33), stub.hooks());
    CHECK(r.trace.truncated);
    CHECK_FALSE(r.trace.stopped);
    CHECK(r.frames.rows() == 33);
  }

  TEST_CASE("baseline loop never touches embeddings") {
    StubRun stub{25};
    InferenceSettings s = stub_settings();
    s.dynamic_embedding = false;
    InferenceHooks h = stub.hooks();
    h.project_embedding = nullptr;
    h.encode_segment = nullptr;
    InferenceResult r = run_inference(s, h);
    CHECK(r.frames.rows() == 25);
    CHECK(r.trace.refreshes.empty());
    CHECK(stub.project_calls == 0);
  }
}

TEST_SUITE("synthesize") {
  TEST_CASE("baseline equals a hand-written greedy decoder") {
    TransformerTTSModel m(tiny_tts(false), 10);
    SynthesisResult s = synthesize(m, nullptr, kText, 1, 12);

    Tape enc(false);
    const Tensor memory = m.encode_text(enc, kText, 1).value();
    Tensor outputs(1, 3);
    bool stopped = false;
    while (!stopped && outputs.rows() - 1 < 12) {
      Tape tape(false);
      Var inputs = m.prenet(tape.constant(outputs));
      auto dec = m.decode(inputs, tape.constant(memory));
      const std::size_t last = dec.mel1.rows() - 1;
      outputs.append_row(dec.mel1.value().row(last));
      stopped = 1.0 / (1.0 + std::exp(-dec.stop_logits.value()[last])) > 0.5;
    }
    CHECK(s.mel1 == outputs.slice_rows(1, outputs.rows()));
    CHECK(s.mel.frames.rows() == s.mel1.rows());
  }

  TEST_CASE("greedy prefix is stable under a shorter budget") {
    bert::SpeechBertModel b(tiny_bert(), 4);
    TransformerTTSModel m(tiny_tts(true), 11);
    SynthesisResult full = synthesize(m, &b, kText, 0, 14);
    for (std::size_t cap : {1u, 4u, 5u, 9u}) {
      if (cap > full.mel1.rows()) continue;
      SynthesisResult part = synthesize(m, &b, kText, 0, cap);
      CHECK(part.mel1 == full.mel1.slice_rows(0, cap));
    }
  }

  TEST_CASE("dynamic synthesis records refreshes and needs a BERT") {
    bert::SpeechBertModel b(tiny_bert(), 4);
    TTSConfig cfg = tiny_tts(true);
    cfg.stop_threshold = 0.999999;
    TransformerTTSModel m(cfg, 12);
    SynthesisResult s = synthesize(m, &b, kText, 0, 11);
    if (s.trace.truncated) {
      CHECK(s.mel1.rows() == 11);
      CHECK(s.trace.refreshes.size() == 2);  // after frames 4 and 8
    }
    for (std::size_t t = 0; t < std::min<std::size_t>(4, s.mel1.rows()); ++t)
      CHECK(s.trace.zero_embedding[t]);
    CHECK(error_code_of([&] { synthesize(m, nullptr, kText, 0); }) == Errc::state);
  }
}

TEST_SUITE("train_tts") {
  toy::ToyCorpusSpec spec() {
    toy::ToyCorpusSpec s;
    s.utterance_count = 2;
    s.syllables = 2;
    s.mel_bins = 3;
    s.vocab_size = 5;
    return s;
  }

  TEST_CASE("zero steps leaves the initialisation") {
    auto corpus = toy::generate_toy_corpus(spec());
    TTSConfig cfg = tiny_tts(false);
    TransformerTTSModel init(cfg, 3);
    TransformerTTSModel trained = train_tts(corpus, nullptr, cfg, {.steps = 0, .seed = 3});
    auto a = std::as_const(init.params()).all(), b = std::as_const(trained.params()).all();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->value == b[k]->value);
  }

  TEST_CASE("seeded runs repeat exactly for both variants") {
    auto corpus = toy::generate_toy_corpus(spec());
    bert::SpeechBertModel b(tiny_bert(), 4);
    for (bool dynamic : {false, true}) {
      TTSConfig cfg = tiny_tts(dynamic);
      std::vector<double> h1, h2;
      auto m1 = train_tts(corpus, &b, cfg, {.steps = 10, .seed = 8}, &h1);
      auto m2 = train_tts(corpus, &b, cfg, {.steps = 10, .seed = 8}, &h2);
      CHECK(h1.size() == 10);
      CHECK(h1 == h2);
      CHECK(evaluate_tts(m1, &b, corpus).loss == evaluate_tts(m2, &b, corpus).loss);
    }
  }

  TEST_CASE("dynamic training without a BERT is refused") {
    auto corpus = toy::generate_toy_corpus(spec());
    CHECK_THROWS_AS(train_tts(corpus, nullptr, tiny_tts(true), {.steps = 1}), Error);
  }

  TEST_CASE("configuration checks") {
    TTSConfig cfg = tiny_tts(false);
    cfg.stop_threshold = 1.0;
    CHECK(error_code_of([&] { cfg.validate(); }) == Errc::config);
    cfg = tiny_tts(false);
    cfg.segment_frames = 0;
    CHECK(error_code_of([&] { cfg.validate(); }) == Errc::config);
  }
}
