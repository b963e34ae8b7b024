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

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "segbert/features.hpp"
#include "segbert/layers.hpp"
#include "segbert/optim.hpp"
#include "segbert/speech_bert.hpp"
#include "segbert/template.hpp"
#include "segbert/toy_corpus.hpp"
#include "support.hpp"

using namespace segbert;

static void BM_DtwAlign(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = testing::random_matrix(n, 8, rng), b = testing::random_matrix(n + n / 3, 8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(templ::dtw_align(a, b).cost);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DtwAlign)->RangeMultiplier(2)->Range(8, 256)->Complexity(benchmark::oNSquared);

static void BM_Attention(benchmark::State& state) {
  Rng rng(2);
  nn::ParameterSet ps;
  nn::MultiHeadAttention mha(ps, "mha", 32, 2, rng);
  Tensor x = testing::random_matrix(static_cast<std::size_t>(state.range(0)), 32, rng);
  for (auto _ : state) {
    nn::Tape tape(false);
    auto v = tape.constant(x);
    benchmark::DoNotOptimize(mha.forward(v, v, v, nullptr).value()(0, 0));
  }
}
BENCHMARK(BM_Attention)->RangeMultiplier(4)->Range(16, 256);

static void BM_LogMel(benchmark::State& state) {
  features::Waveform w;
  for (std::size_t i = 0; i < 16000; ++i) w.samples.push_back(0.5 * std::sin(0.1 * static_cast<double>(i)));
  for (auto _ : state) benchmark::DoNotOptimize(features::compute_log_mel(w, {.bins = 80}).num_frames());
  state.SetLabel("1 s of audio, 80 bins");
}
BENCHMARK(BM_LogMel);

static void BM_BertTrainStep(benchmark::State& state) {
  toy::ToyCorpusSpec spec;
  const auto corpus = toy::generate_toy_corpus(spec);
  bert::SpeechBertConfig cfg;
  cfg.vocab_size = spec.vocab_size;
  bert::SpeechBertModel model(cfg, 1);
  nn::Adam adam(model.params());
  const auto& u = corpus.front();
  for (auto _ : state) {
    model.params().zero_grad();
    nn::Tape tape;
    auto out = model.forward(tape, u.phonemes, u.mel.frames);
    auto loss = bert::bert_loss(out.recon, tape.constant(u.mel.frames));
    tape.backward(loss);
    adam.step();
  }
}
BENCHMARK(BM_BertTrainStep)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
