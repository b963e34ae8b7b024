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

#include "segbert/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "segbert/error.hpp"
#include "segbert/speech_bert.hpp"
#include "segbert/tts.hpp"

namespace segbert::nn {

GradCheckResult check_gradients(const std::string& name, ParameterSet& ps, const LossFn& loss,
                                const GradCheckOptions& options) {
  require(options.step > 0.0 && options.floor > 0.0, Errc::config,
          "gradient check step and floor must be positive");
  ps.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }

  struct Coord {
    Parameter* p;
    std::size_t k;
  };
  std::vector<Coord> coords;
  for (Parameter* p : ps.all())
    for (std::size_t k = 0; k < p->value.size(); ++k) coords.push_back({p, k});
  require(!coords.empty(), Errc::empty_input, name + ": nothing to check");
  if (coords.size() > options.samples) {
    Rng rng(options.seed);
    for (std::size_t k = 0; k < options.samples; ++k)
      std::swap(coords[k], coords[k + rng.index(coords.size() - k)]);
    coords.resize(options.samples);
  }

  const auto evaluate = [&] {
    Tape tape(false);
    return loss(tape).value()[0];
  };
  GradCheckResult result{name, 0.0, coords.size(), ""};
  for (const auto& [p, k] : coords) {
    const double saved = p->value[k];
    p->value[k] = saved + options.step;
    const double plus = evaluate();
    p->value[k] = saved - options.step;
    const double minus = evaluate();
    p->value[k] = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double analytic = p->grad[k];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    const double rel = std::abs(analytic - numeric) / denom;
    if (!(rel <= result.max_rel_error)) {
      result.max_rel_error = rel;
      result.worst = p->name + "[" + std::to_string(k) + "]";
    }
  }
  ps.zero_grad();
  return result;
}

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Projects an output onto fixed random weights so every output element
// carries a distinct gradient.
Var probe(Var out, const Tensor& weights) {
  return sum(mul(out, out.tape().constant(weights)));
}

struct Case {
  std::string name;
  ParameterSet ps;
  LossFn loss;
  std::vector<std::shared_ptr<void>> keep;  // models the loss refers to
};

template <typename T>
std::shared_ptr<T> hold(Case& c, std::shared_ptr<T> obj) {
  c.keep.push_back(obj);
  return obj;
}

std::vector<Case> build_cases(Rng& rng) {
  std::vector<Case> cases;
  const auto add_case = [&](std::string name) -> Case& {
    cases.push_back(Case{std::move(name), {}, {}, {}});
    return cases.back();
  };

  {
    Case& c = add_case("ops/elementwise");
    Parameter& a = c.ps.create("a", random_tensor(3, 4, rng));
    Parameter& b = c.ps.create("b", random_tensor(3, 4, rng));
    Parameter& r = c.ps.create("row", random_tensor(1, 4, rng));
    Parameter& s = c.ps.create("s", random_tensor(1, 1, rng, 0.5, 1.5));
    const Tensor w = random_tensor(3, 4, rng);
    c.loss = [&a, &b, &r, &s, w](Tape& t) {
      const Var va = t.param(a), vb = t.param(b);
      Var x = mul(tanh(va), vb);
      x = add_row(x, t.param(r));
      x = add(sigmoid(x), scale(relu(sub(va, vb)), 0.7));
      x = scale_by(x, t.param(s));
      return probe(x, w);
    };
  }
  {
    Case& c = add_case("ops/matmul");
    Parameter& a = c.ps.create("a", random_tensor(3, 4, rng));
    Parameter& b = c.ps.create("b", random_tensor(4, 5, rng));
    Parameter& d = c.ps.create("d", random_tensor(2, 4, rng));
    const Tensor w1 = random_tensor(3, 5, rng), w2 = random_tensor(3, 2, rng);
    c.loss = [&a, &b, &d, w1, w2](Tape& t) {
      const Var va = t.param(a);
      return add(probe(matmul(va, t.param(b)), w1), probe(matmul_nt(va, t.param(d)), w2));
    };
  }
  {
    Case& c = add_case("ops/masked_softmax");
    Parameter& s = c.ps.create("scores", random_tensor(4, 4, rng, -2.0, 2.0));
    const Tensor w = random_tensor(4, 4, rng);
    auto mask = std::make_shared<Mask>(Mask::causal(4));
    mask->set(3, 1, false);
    hold(c, mask);
    c.loss = [&s, w, mask](Tape& t) {
      const Var v = t.param(s);
      return add(probe(masked_softmax(v, mask.get()), w), probe(masked_softmax(v, nullptr), w));
    };
  }
  {
    Case& c = add_case("ops/layer_norm");
    Parameter& x = c.ps.create("x", random_tensor(3, 5, rng, -2.0, 2.0));
    Parameter& g = c.ps.create("gamma", random_tensor(1, 5, rng, 0.5, 1.5));
    Parameter& b = c.ps.create("beta", random_tensor(1, 5, rng));
    const Tensor w = random_tensor(3, 5, rng);
    c.loss = [&x, &g, &b, w](Tape& t) {
      return probe(layer_norm(t.param(x), t.param(g), t.param(b), 1e-5), w);
    };
  }
  {
    Case& c = add_case("ops/reshape");
    Parameter& a = c.ps.create("a", random_tensor(3, 4, rng));
    Parameter& b = c.ps.create("b", random_tensor(3, 2, rng));
    Parameter& r = c.ps.create("row", random_tensor(1, 6, rng));
    const Tensor w1 = random_tensor(3, 3, rng), w2 = random_tensor(5, 6, rng);
    const Tensor w3 = random_tensor(4, 6, rng);
    c.loss = [&a, &b, &r, w1, w2, w3](Tape& t) {
      const Var cols[] = {t.param(a), t.param(b)};
      const Var wide = concat_cols(cols);                   // 3 x 6
      const Var mid = slice_cols(wide, 2, 3);               // 3 x 3
      const Var rows[] = {wide, repeat_row(t.param(r), 2)};
      const Var tall = slice_rows(concat_rows(rows), 0, 5);  // 5 x 6
      const std::size_t ids[] = {4, 0, 4, 2};
      return add(add(probe(mid, w1), probe(tall, w2)), probe(gather_rows(tall, ids), w3));
    };
  }
  for (std::size_t kernel : {3, 4}) {
    Case& c = add_case("ops/unfold_rows_k" + std::to_string(kernel));
    Parameter& x = c.ps.create("x", random_tensor(5, 3, rng));
    const Tensor w = random_tensor(5, 3 * kernel, rng);
    c.loss = [&x, w, kernel](Tape& t) { return probe(unfold_rows(t.param(x), kernel), w); };
  }
  {
    Case& c = add_case("ops/dropout");
    Parameter& x = c.ps.create("x", random_tensor(4, 5, rng));
    const Tensor w = random_tensor(4, 5, rng);
    c.loss = [&x, w](Tape& t) {
      Rng fixed(11);
      return probe(dropout(t.param(x), 0.4, fixed), w);
    };
  }
  {
    Case& c = add_case("ops/losses");
    Parameter& a = c.ps.create("a", random_tensor(4, 3, rng));
    Parameter& b = c.ps.create("b", random_tensor(4, 3, rng));
    Parameter& z = c.ps.create("logits", random_tensor(4, 1, rng, -3.0, 3.0));
    c.loss = [&a, &b, &z](Tape& t) {
      const Var va = t.param(a), vb = t.param(b);
      const double weights[] = {1.0, 0.0, 2.0, 1.0};
      const double targets[] = {0.0, 1.0, 0.0, 1.0};
      Var l = add(mse(va, vb), weighted_mse(va, vb, weights));
      l = add(l, bce_with_logits(t.param(z), targets));
      return add(l, add(scale(sum(mul(va, va)), 0.1), mean(vb)));
    };
  }

  {
    Case& c = add_case("layer/linear");
    auto layer = hold(c, std::make_shared<Linear>(c.ps, "linear", 4, 3, rng));
    Parameter& x = c.ps.create("x", random_tensor(5, 4, rng));
    const Tensor w = random_tensor(5, 3, rng);
    c.loss = [layer, &x, w](Tape& t) { return probe(layer->forward(t.param(x)), w); };
  }
  {
    Case& c = add_case("layer/feed_forward");
    auto layer = hold(c, std::make_shared<FeedForward>(c.ps, "ff", 4, 8, rng));
    Parameter& x = c.ps.create("x", random_tensor(3, 4, rng));
    const Tensor w = random_tensor(3, 4, rng);
    c.loss = [layer, &x, w](Tape& t) { return probe(layer->forward(t.param(x)), w); };
  }
  {
    Case& c = add_case("layer/attention");
    auto layer = hold(c, std::make_shared<MultiHeadAttention>(c.ps, "attn", 6, 2, rng));
    Parameter& q = c.ps.create("q", random_tensor(3, 6, rng));
    Parameter& kv = c.ps.create("kv", random_tensor(4, 6, rng));
    auto mask = hold(c, std::make_shared<Mask>(3, 4));
    mask->set(0, 3, false);
    mask->set(2, 0, false);
    const Tensor w = random_tensor(3, 6, rng);
    c.loss = [layer, mask, &q, &kv, w](Tape& t) {
      const Var m = t.param(kv);
      return probe(layer->forward(t.param(q), m, m, mask.get()), w);
    };
  }
  {
    Case& c = add_case("layer/positional_encoding");
    auto layer = hold(c, std::make_shared<PositionalEncoding>(c.ps, "pe", 0.8));
    Parameter& x = c.ps.create("x", random_tensor(6, 4, rng));
    const Tensor w = random_tensor(6, 4, rng);
    c.loss = [layer, &x, w](Tape& t) { return probe(layer->forward(t.param(x)), w); };
  }
  {
    Case& c = add_case("layer/conv1d");
    auto layer = hold(c, std::make_shared<Conv1d>(c.ps, "conv", 3, 2, 3, rng));
    Parameter& x = c.ps.create("x", random_tensor(5, 3, rng));
    const Tensor w = random_tensor(5, 2, rng);
    c.loss = [layer, &x, w](Tape& t) { return probe(tanh(layer->forward(t.param(x))), w); };
  }
  {
    Case& c = add_case("layer/embedding");
    auto layer = hold(c, std::make_shared<Embedding>(c.ps, "embed", 5, 3, rng));
    const Tensor w = random_tensor(4, 3, rng);
    c.loss = [layer, w](Tape& t) {
      const std::size_t ids[] = {1, 4, 1, 0};
      return probe(layer->forward(t, ids), w);
    };
  }
  {
    Case& c = add_case("layer/encoder_stack");
    auto layer = hold(c, std::make_shared<EncoderStack>(c.ps, "enc", 2, 6, 2, 8, rng));
    Parameter& x = c.ps.create("x", random_tensor(4, 6, rng));
    const Tensor w = random_tensor(4, 6, rng);
    c.loss = [layer, &x, w](Tape& t) {
      Rng fixed(5);
      const RunContext ctx{&fixed, 0.1};
      return probe(layer->forward(t.param(x), nullptr, ctx), w);
    };
  }
  {
    Case& c = add_case("layer/decoder_stack");
    auto layer = hold(c, std::make_shared<DecoderStack>(c.ps, "dec", 2, 6, 2, 8, rng));
    Parameter& x = c.ps.create("x", random_tensor(4, 6, rng));
    Parameter& m = c.ps.create("memory", random_tensor(3, 6, rng));
    auto mask = hold(c, std::make_shared<Mask>(Mask::causal(4)));
    const Tensor w = random_tensor(4, 6, rng);
    c.loss = [layer, mask, &x, &m, w](Tape& t) {
      Rng fixed(9);
      const RunContext ctx{&fixed, 0.1};
      return probe(layer->forward(t.param(x), t.param(m), mask.get(), ctx), w);
    };
  }
  return cases;
}

GradCheckResult check_bert(bool masked_only, const GradCheckOptions& options) {
  bert::SpeechBertConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.text_layers = cfg.speech_layers = cfg.decoder_layers = 1;
  cfg.d_ff = 16;
  cfg.mel_bins = 4;
  cfg.vocab_size = 6;
  bert::SpeechBertModel model(cfg, 21);
  Rng rng(22);
  const Tensor masked = random_tensor(6, 4, rng);
  const Tensor target = random_tensor(6, 4, rng);
  const std::size_t text[] = {1, 5, 2};
  std::vector<double> weights;
  if (masked_only) weights = {0.0, 1.0, 1.0, 0.0, 0.0, 1.0};
  return check_gradients(masked_only ? "model/bert_loss_masked_only" : "model/bert_loss",
                         model.params(),
                         [&](Tape& t) {
                           const auto out = model.forward(t, text, masked);
                           return bert::bert_loss(out.recon, t.constant(target), weights);
                         },
                         options);
}

GradCheckResult check_tts(bool dynamic, const GradCheckOptions& options) {
  tts::TTSConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.encoder_layers = cfg.decoder_layers = 1;
  cfg.d_ff = 16;
  cfg.mel_bins = 4;
  cfg.vocab_size = 6;
  cfg.speaker_count = 2;
  cfg.speaker_dim = 3;
  cfg.prenet_dim = 6;
  cfg.segment_frames = 2;
  cfg.embedding_dim = 8;
  cfg.dynamic_projection_dim = 80;
  cfg.dynamic_embedding = dynamic;
  cfg.postnet_layers = 2;
  cfg.postnet_channels = 4;
  cfg.postnet_kernel = 3;
  cfg.prenet_dropout = 0.5;
  cfg.dropout = 0.1;
  tts::TransformerTTSModel model(cfg, 31);
  Rng rng(32);
  const Tensor gt = random_tensor(5, 4, rng);
  std::vector<Tensor> embeddings;
  if (dynamic) {
    embeddings.emplace_back(2, 8);
    embeddings.push_back(random_tensor(2, 8, rng));
    embeddings.push_back(random_tensor(2, 8, rng));
  }
  const std::size_t text[] = {3, 0, 4};
  const auto stop = tts::stop_targets(5);
  return check_gradients(dynamic ? "model/tts_loss_dynamic" : "model/tts_loss_baseline",
                         model.params(),
                         [&](Tape& t) {
                           Rng fixed(33);
                           const RunContext ctx{&fixed, cfg.dropout};
                           const auto out =
                               model.forward_teacher_forced(t, text, 1, gt, embeddings, ctx);
                           return tts::tts_loss(out.mel1, out.mel_post, out.stop_logits,
                                                t.constant(gt), stop);
                         },
                         options);
}

}  // namespace

std::vector<GradCheckResult> run_selfcheck(const GradCheckOptions& options) {
  Rng rng(options.seed);
  std::vector<GradCheckResult> results;
  for (Case& c : build_cases(rng)) results.push_back(check_gradients(c.name, c.ps, c.loss, options));
  results.push_back(check_bert(false, options));
  results.push_back(check_bert(true, options));
  results.push_back(check_tts(false, options));
  results.push_back(check_tts(true, options));
  return results;
}

}  // namespace segbert::nn
