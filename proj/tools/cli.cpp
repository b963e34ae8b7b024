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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "segbert/binary_io.hpp"
#include "segbert/checkpoint.hpp"
#include "segbert/error.hpp"
#include "segbert/eval.hpp"
#include "segbert/gradcheck.hpp"
#include "segbert/run_config.hpp"
#include "segbert/template.hpp"
#include "segbert/toy_corpus.hpp"

namespace segbert::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kGradTolerance = 1e-5;

// Exclusive marker beside an output so two runs never write the same target.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& target) : path_(target.string() + ".lock") {
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (f == nullptr)
      fail(Errc::io, "cannot lock " + target.string() + " (is another run writing it? remove " +
                         path_.string() + " if not)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

fs::path sidecar(const fs::path& p, const char* suffix) { return p.string() + suffix; }

RunConfig base_config(const std::string& path) {
  return path.empty() ? desk_profile() : load_run_config(path);
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string join_args(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

void write_manifest(const fs::path& out, const std::vector<std::string>& args,
                    const RunConfig& cfg, double elapsed) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.3f", elapsed);
  std::string text = "# segbert run manifest\n";
  text += "version = " + std::string(kVersion) + "\n";
  text += "command = segbert " + join_args(args) + "\n";
  text += "seed = " + std::to_string(cfg.seed) + "\n";
  text += "config_hash = " + hex64(config_hash(cfg)) + "\n";
  text += "elapsed_seconds = " + std::string(secs) + "\n";
  text += "# resolved configuration\n" + serialize_run_config(cfg);
  io::write_text(sidecar(out, ".manifest"), text);
}

std::size_t infer_vocab(std::span<const features::Utterance> corpus) {
  std::size_t top = 0;
  for (const auto& u : corpus)
    for (std::size_t t : u.phonemes) top = std::max(top, t + 1);
  return top;
}

std::size_t infer_speakers(std::span<const features::Utterance> corpus) {
  std::uint32_t top = 0;
  for (const auto& u : corpus) top = std::max(top, u.speaker_id + 1);
  return top;
}

std::size_t mean_frames(std::span<const features::Utterance> corpus) {
  std::size_t total = 0;
  for (const auto& u : corpus) total += u.mel.num_frames();
  return (total + corpus.size() - 1) / corpus.size();
}

bool parse_flag(const std::string& s, const char* name) {
  if (s == "true") return true;
  if (s == "false") return false;
  fail(Errc::config, std::string(name) + " expects true or false, got '" + s + "'");
}

struct LoadedBert {
  RunConfig cfg;
  std::unique_ptr<bert::SpeechBertModel> model;
};

std::optional<LoadedBert> load_bert(const std::string& path) {
  if (path.empty() || path == "none") return std::nullopt;
  LoadedBert b;
  b.cfg = load_run_config(sidecar(path, ".cfg"));
  b.model = std::make_unique<bert::SpeechBertModel>(b.cfg.bert, 0);
  nn::load_checkpoint(b.model->params(), path);
  return b;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& history) {
  std::string text = "step,loss\n";
  char buf[64];
  for (std::size_t k = 0; k < history.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, history[k]);
    text += buf;
  }
  io::write_text(path, text);
}

struct Options {
  std::string config, out, corpus, tmpl, bert, model, text, ref, hyp, mode, dynamic;
  std::optional<std::size_t> steps, utterances, max_frames;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> speaker;
  bool per_utterance = false;
};

void apply_overrides(RunConfig& cfg, const Options& o) {
  if (o.seed) cfg.seed = *o.seed;
}

int cmd_gen(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = base_config(o.config);
  if (o.seed) cfg.toy.seed = *o.seed;
  if (o.utterances) cfg.toy.utterance_count = *o.utterances;
  if (!o.mode.empty()) cfg.toy.mode = toy::parse_prosody_mode(o.mode);
  cfg.validate();
  OutputLock lock(o.out);
  toy::write_toy_corpus(cfg.toy, o.out);
  write_manifest(o.out, args, cfg,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  out << "wrote " << cfg.toy.utterance_count << " utterances (" << toy::prosody_mode_name(cfg.toy.mode)
      << ") to " << o.out << "\n";
  return kExitOk;
}

int cmd_template(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = base_config(o.config);
  apply_overrides(cfg, o);
  const auto corpus = features::load_corpus(o.corpus);
  OutputLock lock(o.out);
  auto t = templ::build_template(templ::collect_phone_segments(corpus));
  t.frame_shift_ms = corpus.front().mel.frame_shift_ms;
  templ::save_template(t, o.out);
  write_manifest(o.out, args, cfg,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  out << "template: " << t.length() << " frames x " << t.frames.cols() << " bins\n";
  return kExitOk;
}

int cmd_bert(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = base_config(o.config);
  apply_overrides(cfg, o);
  if (o.steps) cfg.bert_steps = *o.steps;
  const auto corpus = features::load_corpus(o.corpus);
  if (cfg.bert.vocab_size == 0) cfg.bert.vocab_size = infer_vocab(corpus);
  cfg.validate();
  const auto tmpl = templ::load_template(o.tmpl);
  OutputLock lock(o.out);
  std::vector<double> history;
  const auto model = bert::train_bert(corpus, tmpl, cfg.bert, {cfg.bert_steps, cfg.seed}, &history);
  nn::save_checkpoint(model.params(), o.out);
  io::write_text(sidecar(o.out, ".cfg"), serialize_run_config(cfg));
  write_loss_csv(sidecar(o.out, ".loss.csv"), history);
  write_manifest(o.out, args, cfg,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  out << "bert: " << cfg.bert_steps << " steps, " << model.params().scalar_count() << " parameters";
  if (!history.empty()) out << ", loss " << history.front() << " -> " << history.back();
  out << "\n";
  return kExitOk;
}

int cmd_tts_train(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = base_config(o.config);
  apply_overrides(cfg, o);
  if (o.steps) cfg.tts_steps = *o.steps;
  if (!o.dynamic.empty()) cfg.tts.dynamic_embedding = parse_flag(o.dynamic, "--dynamic");
  const auto corpus = features::load_corpus(o.corpus);
  if (cfg.tts.vocab_size == 0) cfg.tts.vocab_size = infer_vocab(corpus);
  if (cfg.tts.speaker_count == 0) cfg.tts.speaker_count = infer_speakers(corpus);
  if (cfg.tts.max_decode_frames == 0) cfg.tts.max_decode_frames = 10 * mean_frames(corpus);
  const auto bert = load_bert(o.bert);
  if (cfg.tts.dynamic_embedding) {
    require(bert.has_value(), Errc::config, "dynamic TTS training needs --bert <checkpoint>");
    // The speech encoder is whatever was pretrained; its width is d_E.
    cfg.bert = bert->cfg.bert;
    cfg.tts.embedding_dim = cfg.bert.embedding_dim();
  }
  cfg.validate();
  OutputLock lock(o.out);
  std::vector<double> history;
  const auto model = tts::train_tts(corpus, bert ? bert->model.get() : nullptr, cfg.tts,
                                    {cfg.tts_steps, cfg.seed}, &history);
  nn::save_checkpoint(model.params(), o.out);
  io::write_text(sidecar(o.out, ".cfg"), serialize_run_config(cfg));
  write_loss_csv(sidecar(o.out, ".loss.csv"), history);
  write_manifest(o.out, args, cfg,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  out << "tts (" << (cfg.tts.dynamic_embedding ? "dynamic" : "baseline") << "): " << cfg.tts_steps
      << " steps, " << model.params().scalar_count() << " parameters";
  if (!history.empty()) out << ", loss " << history.front() << " -> " << history.back();
  out << "\n";
  return kExitOk;
}

int cmd_tts_synth(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = load_run_config(sidecar(o.model, ".cfg"));
  tts::TransformerTTSModel model(cfg.tts, 0);
  nn::load_checkpoint(model.params(), o.model);
  const auto bert = load_bert(o.bert);
  const auto line = features::parse_token_line(io::read_text(o.text));
  const std::uint32_t speaker = o.speaker.value_or(line.speaker_id);
  OutputLock lock(o.out);
  auto result = tts::synthesize(model, bert ? bert->model.get() : nullptr, line.tokens, speaker,
                                o.max_frames);
  result.mel.frame_shift_ms = cfg.mel.shift_ms;
  features::save_mel(result.mel, o.out);
  write_manifest(o.out, args, cfg,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  out << "synthesized " << result.mel.num_frames() << " frames, "
      << result.trace.refreshes.size() << " embedding refreshes, "
      << (result.trace.truncated ? "truncated at max_decode_frames" : "stopped by stop token")
      << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = base_config(o.config);
  apply_overrides(cfg, o);
  if (o.per_utterance) cfg.eval_per_utterance = true;
  const auto refs = features::load_corpus(o.ref);
  std::vector<eval::EvalPair> pairs;
  std::size_t missing = 0;
  for (const auto& u : refs) {
    const fs::path hyp_mel = fs::path(o.hyp) / (u.id + ".mel");
    if (!fs::exists(hyp_mel)) {
      ++missing;
      continue;
    }
    eval::EvalPair p;
    p.id = u.id;
    p.ref_mel = u.mel;
    p.ref_alignment = u.alignment;
    p.ref_wave = u.waveform;
    p.hyp_mel = features::load_mel(hyp_mel);
    if (const auto a = fs::path(o.hyp) / (u.id + ".align"); fs::exists(a))
      p.hyp_alignment = features::parse_alignment(io::read_text(a), p.hyp_mel.num_frames());
    if (const auto w = fs::path(o.hyp) / (u.id + ".wav"); fs::exists(w))
      p.hyp_wave = features::load_wav(w);
    pairs.push_back(std::move(p));
  }
  require(!pairs.empty(), Errc::empty_input, "no hypothesis mels in " + o.hyp + " match " + o.ref);
  OutputLock lock(o.out);
  eval::CompareOptions opts;
  opts.per_utterance = cfg.eval_per_utterance;
  const auto report = eval::compare(pairs, opts);
  eval::write_report_csv(report, o.out);
  for (const auto& p : pairs) {
    if (!p.ref_wave || !p.hyp_wave) continue;
    const fs::path dir = sidecar(o.out, ".contours");
    fs::create_directories(dir);
    io::write_text(dir / (p.id + ".csv"), eval::f0_contour_csv(p, opts.f0));
  }
  write_manifest(o.out, args, cfg,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  out << eval::report_csv(report);
  if (missing > 0) out << missing << " reference utterances had no hypothesis and were skipped\n";
  return kExitOk;
}

int cmd_selfcheck(std::ostream& out) {
  const auto results = nn::run_selfcheck();
  double worst = 0.0;
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-30s %.3e  (%zu coords, worst %s)\n", r.name.c_str(),
                  r.max_rel_error, r.checked, r.worst.c_str());
    out << buf;
    worst = std::max(worst, r.max_rel_error);
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e (tolerance %.0e)\n", worst, kGradTolerance);
  out << buf;
  return worst < kGradTolerance ? kExitOk : kExitDomain;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"segbert: speech-BERT segment embeddings for Transformer TTS", "segbert"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate a toy corpus");
  gen->add_option("--out", o.out, "Output corpus directory")->required();
  gen->add_option("--config", o.config, "Run configuration file");
  gen->add_option("--mode", o.mode, "independent | chained | ambiguous-pair");
  gen->add_option("--utterances", o.utterances, "Utterance count");
  gen->add_option("--seed", o.seed, "Corpus seed");

  auto* tmpl = app.add_subcommand("template", "Acoustic segment templates");
  tmpl->require_subcommand(1);
  auto* tmpl_build = tmpl->add_subcommand("build", "Successive-DTW template from a corpus");
  tmpl_build->add_option("--corpus", o.corpus, "Corpus directory")->required();
  tmpl_build->add_option("--out", o.out, "Template file")->required();
  tmpl_build->add_option("--config", o.config, "Run configuration file");

  auto* bert_cmd = app.add_subcommand("bert", "Speech BERT");
  bert_cmd->require_subcommand(1);
  auto* pretrain = bert_cmd->add_subcommand("pretrain", "Masked-segment pretraining");
  pretrain->add_option("--corpus", o.corpus, "Corpus directory")->required();
  pretrain->add_option("--template", o.tmpl, "Template file")->required();
  pretrain->add_option("--config", o.config, "Run configuration file");
  pretrain->add_option("--out", o.out, "Checkpoint to write")->required();
  pretrain->add_option("--steps", o.steps, "Training steps");
  pretrain->add_option("--seed", o.seed, "Seed");

  auto* tts_cmd = app.add_subcommand("tts", "Transformer TTS");
  tts_cmd->require_subcommand(1);
  auto* train = tts_cmd->add_subcommand("train", "Teacher-forced training");
  train->add_option("--corpus", o.corpus, "Corpus directory")->required();
  train->add_option("--bert", o.bert, "Speech BERT checkpoint or 'none'")->required();
  train->add_option("--config", o.config, "Run configuration file");
  train->add_option("--out", o.out, "Checkpoint to write")->required();
  train->add_option("--steps", o.steps, "Training steps");
  train->add_option("--seed", o.seed, "Seed");
  train->add_option("--dynamic", o.dynamic, "true | false (overrides tts.dynamic_embedding)");
  auto* synth = tts_cmd->add_subcommand("synth", "Greedy autoregressive synthesis");
  synth->add_option("--model", o.model, "TTS checkpoint")->required();
  synth->add_option("--bert", o.bert, "Speech BERT checkpoint or 'none'")->required();
  synth->add_option("--text", o.text, "Token file (spk:<id> tok ...)")->required();
  synth->add_option("--speaker", o.speaker, "Speaker id (defaults to the token file's)");
  synth->add_option("--out", o.out, "Mel file to write")->required();
  synth->add_option("--max-frames", o.max_frames, "Override max_decode_frames");

  auto* eval_cmd = app.add_subcommand("eval", "Objective prosody evaluation");
  eval_cmd->require_subcommand(1);
  auto* cmp = eval_cmd->add_subcommand("compare", "Compare hypothesis mels against a corpus");
  cmp->add_option("--ref", o.ref, "Reference corpus directory")->required();
  cmp->add_option("--hyp", o.hyp, "Directory of <id>.mel [.align] [.wav]")->required();
  cmp->add_option("--out", o.out, "Report CSV")->required();
  cmp->add_option("--config", o.config, "Run configuration file");
  cmp->add_flag("--per-utterance", o.per_utterance, "Average per-utterance statistics");

  auto* self = app.add_subcommand("selfcheck", "Internal consistency checks");
  self->require_subcommand(1);
  auto* grad = self->add_subcommand("grad", "Analytic vs finite-difference gradients");

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  std::vector<const char*> argv{"segbert"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "segbert: " << e.what() << "\n" << "run 'segbert --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, args, out);
    if (tmpl_build->parsed()) return cmd_template(o, args, out);
    if (pretrain->parsed()) return cmd_bert(o, args, out);
    if (train->parsed()) return cmd_tts_train(o, args, out);
    if (synth->parsed()) return cmd_tts_synth(o, args, out);
    if (cmp->parsed()) return cmd_eval(o, args, out);
    if (grad->parsed()) return cmd_selfcheck(out);
  } catch (const Error& e) {
    err << "segbert: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "segbert: " << e.what() << "\n";
    return kExitDomain;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace segbert::cli
