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
#include <thread>
#include <vector>

#include "segbert/error.hpp"
#include "segbert/speech_bert.hpp"
#include "segbert/toy_corpus.hpp"
#include "support.hpp"

using namespace segbert;
using namespace segbert::bert;
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

features::AlignmentRecord uniform_alignment(std::size_t syllables, std::uint32_t frames_each = 2) {
  features::AlignmentRecord a;
  for (std::size_t s = 0; s < syllables; ++s) {
    const auto start = static_cast<std::uint32_t>(s) * frames_each;
    a.phones.push_back({"p", start, start + frames_each});
    a.syllables.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s)});
  }
  return a;
}

SpeechBertConfig tiny_config() {
  SpeechBertConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.text_layers = cfg.speech_layers = cfg.decoder_layers = 1;
  cfg.d_ff = 16;
  cfg.mel_bins = 3;
  cfg.vocab_size = 5;
  return cfg;
}

Tensor recon_of(const SpeechBertModel& m, const std::vector<std::size_t>& text, const Tensor& mel) {
  nn::Tape tape(false);
  return m.forward(tape, text, mel).recon.value();
}

double row_distance(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

}  // namespace

TEST_SUITE("plan_masks") {
  TEST_CASE("rate extremes") {
    auto a = uniform_alignment(12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CHECK(plan_masks(a, 0.0, seed).spans.empty());
      CHECK(plan_masks(a, 1.0, seed).spans == features::syllable_frame_spans(a));
    }
  }

  TEST_CASE("Bernoulli rate concentrates") {
    auto a = uniform_alignment(10000, 1);
    MaskPlan p = plan_masks(a, 0.2, 123);
    const double frac = static_cast<double>(p.spans.size()) / 10000.0;
    CHECK(std::abs(frac - 0.2) <= 0.01);
  }

  TEST_CASE("exact-count variant draws round(rate * n)") {
    auto a = uniform_alignment(17);
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      CHECK(plan_masks(a, 0.2, seed, true).spans.size() == 3);
  }

  TEST_CASE("spans are ordered syllable spans, reproducible from the seed") {
    auto a = uniform_alignment(30, 3);
    auto all = features::syllable_frame_spans(a);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      MaskPlan p = plan_masks(a, 0.4, seed);
      CHECK(p.seed == seed);
      for (std::size_t k = 0; k < p.spans.size(); ++k) {
        CHECK(std::find(all.begin(), all.end(), p.spans[k]) != all.end());
        if (k > 0) CHECK(p.spans[k - 1].second <= p.spans[k].first);
      }
      CHECK(plan_masks(a, 0.4, seed).spans == p.spans);
    }
  }

  TEST_CASE("rate outside [0,1] is rejected") {
    CHECK_THROWS_AS(plan_masks(uniform_alignment(2), 1.5, 0), Error);
  }
}

TEST_SUITE("apply_masks") {
  TEST_CASE("empty plan is the identity") {
    Rng rng(1);
    features::MelSpectrogram mel{random_matrix(8, 3, rng)};
    templ::AcousticTemplate t{random_matrix(3, 3, rng)};
    CHECK(apply_masks(mel, {}, t) == mel);
  }

  TEST_CASE("span of template length copies the template") {
    Rng rng(2);
    features::MelSpectrogram mel{random_matrix(8, 3, rng)};
    templ::AcousticTemplate t{random_matrix(3, 3, rng)};
    auto out = apply_masks(mel, {{{2, 5}}, 0}, t);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(out.frames(r, c) == (r >= 2 && r < 5 ? t.frames(r - 2, c) : mel.frames(r, c)));
  }

  TEST_CASE("long span follows the duplication rule") {
    Rng rng(3);
    features::MelSpectrogram mel{random_matrix(10, 2, rng)};
    templ::AcousticTemplate t{random_matrix(3, 2, rng)};
    auto out = apply_masks(mel, {{{1, 8}}, 0}, t);
    CHECK(out.frames.slice_rows(1, 8) == templ::pad_mask(t, 7));
    CHECK(out.frames.slice_rows(8, 10) == mel.frames.slice_rows(8, 10));
    CHECK(out.frames.slice_rows(0, 1) == mel.frames.slice_rows(0, 1));
  }

  TEST_CASE("unmasked frames are untouched under random plans") {
    Rng rng(4);
    auto a = uniform_alignment(10, 4);
    features::MelSpectrogram mel{random_matrix(40, 3, rng)};
    templ::AcousticTemplate t{random_matrix(5, 3, rng)};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      MaskPlan p = plan_masks(a, 0.3, seed);
      auto out = apply_masks(mel, p, t);
      auto w = masked_frame_weights(40, p);
      for (std::size_t r = 0; r < 40; ++r)
        if (w[r] == 0.0)
          for (std::size_t c = 0; c < 3; ++c) CHECK(out.frames(r, c) == mel.frames(r, c));
    }
  }

  TEST_CASE("span past the mel is a bounds error") {
    features::MelSpectrogram mel{Tensor(4, 2)};
    templ::AcousticTemplate t{Tensor(2, 2)};
    CHECK(error_code_of([&] { apply_masks(mel, {{{2, 5}}, 0}, t); }) == Errc::bounds);
  }
}

TEST_SUITE("bert_model") {
  TEST_CASE("decoder is bidirectional") {
    SpeechBertModel m(tiny_config(), 3);
    Rng rng(5);
    Tensor mel = random_matrix(6, 3, rng);
    std::vector<std::size_t> text{1, 2, 3};
    Tensor base = recon_of(m, text, mel);
    Tensor moved_in = mel;
    moved_in(5, 0) += 1.0;
    Tensor moved = recon_of(m, text, moved_in);
    bool earlier_changed = false;
    for (std::size_t c = 0; c < 3; ++c) earlier_changed |= moved(0, c) != base(0, c);
    CHECK(earlier_changed);
  }

  TEST_CASE("output shape follows the input mel") {
    SpeechBertModel m(tiny_config(), 4);
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t frames = 1 + rng.index(25), tokens = 1 + rng.index(6);
      std::vector<std::size_t> text;
      for (std::size_t k = 0; k < tokens; ++k) text.push_back(rng.index(5));
      nn::Tape tape(false);
      auto out = m.forward(tape, text, random_matrix(frames, 3, rng));
      CHECK(out.recon.value().shape() == std::vector<std::size_t>{frames, 3});
      CHECK(out.states.value().shape() == std::vector<std::size_t>{frames, 8});
    }
  }

  TEST_CASE("unknown token") {
    SpeechBertModel m(tiny_config(), 4);
    nn::Tape tape(false);
    std::vector<std::size_t> text{1, 5};
    CHECK(error_code_of([&] { m.forward(tape, text, Tensor(4, 3)); }) == Errc::vocabulary);
  }

  TEST_CASE("no stop-token or causal machinery is registered") {
    SpeechBertModel m(tiny_config(), 4);
    for (const nn::Parameter* p : m.params().all()) CHECK(p->name.find("stop") == std::string::npos);
  }

  TEST_CASE("reconstruction loss reaches the speech encoder") {
    SpeechBertModel m(tiny_config(), 9);
    Rng rng(10);
    Tensor mel = random_matrix(6, 3, rng);
    std::vector<std::size_t> text{0, 4};
    nn::Tape tape;
    auto out = m.forward(tape, text, mel);
    tape.backward(bert_loss(out.recon, tape.constant(random_matrix(6, 3, rng))));
    double norm = 0.0;
    for (const nn::Parameter* p : std::as_const(m.params()).all())
      if (p->name.rfind("bert.speech.", 0) == 0)
        for (double g : p->grad.values()) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_SUITE("bert_loss") {
  TEST_CASE("hand values") {
    nn::Tape tape(false);
    Var gt = tape.constant(Tensor::matrix({{1, 0}, {1, 3}}));
    CHECK(bert_loss(gt, gt).value()[0] == 0.0);
    Var plus_one = tape.constant(Tensor::matrix({{2, 1}, {2, 4}}));
    CHECK(bert_loss(plus_one, gt).value()[0] == 1.0);
    Var recon = tape.constant(Tensor::matrix({{0, 0}, {1, 1}}));
    CHECK(bert_loss(recon, gt).value()[0] == 1.25);
  }

  TEST_CASE("masked-only weights and shape errors") {
    nn::Tape tape(false);
    Var gt = tape.constant(Tensor::matrix({{1, 0}, {1, 3}}));
    Var recon = tape.constant(Tensor::matrix({{0, 0}, {1, 1}}));
    std::vector<double> second_only{0.0, 1.0};
    CHECK(bert_loss(recon, gt, second_only).value()[0] == 2.0);
    CHECK(masked_frame_weights(5, {{{1, 3}}, 0}) == std::vector<double>{0, 1, 1, 0, 0});
    Var wide = tape.constant(Tensor(2, 3));
    CHECK(error_code_of([&] { bert_loss(wide, gt); }) == Errc::dimension);
  }
}

TEST_SUITE("extract_embedding") {
  TEST_CASE("one row per frame, deterministic") {
    SpeechBertModel m(tiny_config(), 8);
    Rng rng(1);
    for (std::size_t len : {1u, 7u, 20u}) {
      Tensor seg = random_matrix(len, 3, rng);
      Tensor e = m.extract_embedding(seg);
      CHECK(e.rows() == len);
      CHECK(e.cols() == m.config().embedding_dim());
      CHECK(m.extract_embedding(seg) == e);
    }
  }

  TEST_CASE("constant offset moves the embedding") {
    SpeechBertModel m(tiny_config(), 8);
    Rng rng(2);
    Tensor seg = random_matrix(10, 3, rng);
    Tensor shifted = seg;
    for (double& v : shifted.values()) v += 0.75;
    CHECK(row_distance(m.extract_embedding(seg), m.extract_embedding(shifted)) > 0.0);
  }

  TEST_CASE("concurrent calls agree") {
    SpeechBertModel m(tiny_config(), 8);
    Rng rng(3);
    Tensor seg = random_matrix(12, 3, rng);
    Tensor expected = m.extract_embedding(seg);
    std::vector<Tensor> got(4);
    std::vector<std::thread> workers;
    for (std::size_t k = 0; k < got.size(); ++k)
      workers.emplace_back([&, k] { got[k] = m.extract_embedding(seg); });
    for (auto& w : workers) w.join();
    for (const Tensor& g : got) CHECK(g == expected);
  }

  TEST_CASE("empty segment is rejected") {
    SpeechBertModel m(tiny_config(), 8);
    CHECK(error_code_of([&] { m.extract_embedding(Tensor(0, 3)); }) == Errc::empty_input);
  }
}

TEST_SUITE("train_bert") {
  toy::ToyCorpusSpec small_spec() {
    toy::ToyCorpusSpec spec;
    spec.utterance_count = 3;
    spec.syllables = 3;
    spec.mel_bins = 3;
    spec.vocab_size = 5;
    return spec;
  }

  TEST_CASE("zero steps returns the initialisation") {
    auto corpus = toy::generate_toy_corpus(small_spec());
    auto segs = templ::collect_phone_segments(corpus);
    auto tmpl = templ::build_template(segs);
    SpeechBertConfig cfg = tiny_config();
    SpeechBertModel init(cfg, 5);
    SpeechBertModel trained = train_bert(corpus, tmpl, cfg, {.steps = 0, .seed = 5});
    auto a = std::as_const(init.params()).all(), b = std::as_const(trained.params()).all();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->value == b[k]->value);
  }

  TEST_CASE("same seed, same loss curve; training moves the loss") {
    auto corpus = toy::generate_toy_corpus(small_spec());
    auto tmpl = templ::build_template(templ::collect_phone_segments(corpus));
    SpeechBertConfig cfg = tiny_config();
    std::vector<double> first, second;
    SpeechBertModel a = train_bert(corpus, tmpl, cfg, {.steps = 30, .seed = 2}, &first);
    SpeechBertModel b = train_bert(corpus, tmpl, cfg, {.steps = 30, .seed = 2}, &second);
    CHECK(first.size() == 30);
    CHECK(first == second);
    CHECK(evaluate_bert(a, corpus, tmpl, 1) == evaluate_bert(b, corpus, tmpl, 1));
    SpeechBertModel init(cfg, 2);
    CHECK(evaluate_bert(a, corpus, tmpl, 1) < evaluate_bert(init, corpus, tmpl, 1));
  }

  TEST_CASE("invalid configuration") {
    SpeechBertConfig cfg = tiny_config();
    cfg.heads = 3;
    CHECK(error_code_of([&] { cfg.validate(); }) == Errc::config);
    cfg = tiny_config();
    cfg.mask_rate = -0.1;
    CHECK(error_code_of([&] { cfg.validate(); }) == Errc::config);
  }
}
