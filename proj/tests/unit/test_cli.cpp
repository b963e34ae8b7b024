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
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"
#include "segbert/run_config.hpp"
#include "segbert/toy_corpus.hpp"
#include "support.hpp"

using namespace segbert;
using segbert::testing::TempDir;
namespace fs = std::filesystem;

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

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> sorted_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::string bytes_of(const fs::path& p) {
  const auto b = io::read_file(p);
  return {b.begin(), b.end()};
}

}  // namespace

TEST_SUITE("toy_corpus") {
  TEST_CASE("four utterances give twelve loadable files") {
    TempDir dir("toy4");
    toy::ToyCorpusSpec spec;
    spec.utterance_count = 4;
    toy::write_toy_corpus(spec, dir / "c");
    CHECK(sorted_files(dir / "c").size() == 12);
    auto corpus = features::load_corpus(dir / "c");
    REQUIRE(corpus.size() == 4);
    for (const auto& u : corpus) {
      CHECK(u.mel.bins() == spec.mel_bins);
      CHECK(u.alignment.syllables.size() == spec.syllables);
      CHECK(u.phonemes.size() == spec.syllables * spec.phones_per_syllable);
      CHECK(u.mel.num_frames() >= spec.syllables * spec.min_syllable_frames);
      CHECK(u.mel.num_frames() <= spec.syllables * spec.max_syllable_frames);
    }
  }

  TEST_CASE("same seed, byte-identical directories") {
    TempDir dir("toydet");
    toy::ToyCorpusSpec spec;
    spec.mode = toy::ProsodyMode::chained;
    toy::write_toy_corpus(spec, dir / "a");
    toy::write_toy_corpus(spec, dir / "b");
    auto names = sorted_files(dir / "a");
    REQUIRE(names == sorted_files(dir / "b"));
    for (const auto& n : names) CHECK(bytes_of(dir / "a" / n) == bytes_of(dir / "b" / n));
    spec.seed = 2;
    toy::write_toy_corpus(spec, dir / "c");
    CHECK(bytes_of(dir / "a" / names[0]) != bytes_of(dir / "c" / names[0]));
  }

  TEST_CASE("ambiguous pairs share text and differ in contour") {
    toy::ToyCorpusSpec spec;
    spec.utterance_count = 6;
    spec.mode = toy::ProsodyMode::ambiguous_pair;
    auto corpus = toy::generate_toy_corpus(spec);
    REQUIRE(corpus.size() == 6);
    for (std::size_t k = 0; k < 6; k += 2) {
      const auto& a = corpus[k];
      const auto& b = corpus[k + 1];
      CHECK(a.phonemes == b.phonemes);
      CHECK(a.alignment == b.alignment);
      REQUIRE(a.mel.frames.shape() == b.mel.frames.shape());
      double mad = 0.0;
      for (std::size_t i = 0; i < a.mel.frames.size(); ++i)
        mad += std::abs(a.mel.frames[i] - b.mel.frames[i]);
      CHECK(mad / static_cast<double>(a.mel.frames.size()) > 0.0);
    }
    CHECK(corpus[0].phonemes != corpus[2].phonemes);
  }

  TEST_CASE("spec validation") {
    toy::ToyCorpusSpec spec;
    spec.mode = toy::ProsodyMode::ambiguous_pair;
    spec.utterance_count = 3;
    CHECK(error_code_of([&] { spec.validate(); }) == Errc::config);
    CHECK(error_code_of([] { toy::parse_prosody_mode("wobbly"); }) == Errc::config);
    CHECK(toy::parse_prosody_mode("ambiguous-pair") == toy::ProsodyMode::ambiguous_pair);
  }
}

TEST_SUITE("run_config") {
  TEST_CASE("canonical text reads back exactly") {
    for (const char* name : {"desk", "full"}) {
      RunConfig cfg = profile_by_name(name);
      cfg.seed = 99;
      cfg.tts.stop_threshold = 0.37;
      const std::string text = serialize_run_config(cfg);
      RunConfig back = parse_run_config(text);
      CHECK(serialize_run_config(back) == text);
      CHECK(config_hash(back) == config_hash(cfg));
    }
  }

  TEST_CASE("profiles carry the documented sizes") {
    RunConfig desk = desk_profile();
    CHECK(desk.bert.d_model == 32);
    CHECK(desk.bert.heads == 2);
    CHECK(desk.mel.bins == 8);
    CHECK(desk.tts.segment_frames == 20);
    CHECK(desk.tts.embedding_dim == 32);
    RunConfig full = full_profile();
    CHECK(full.mel.bins == 80);
    CHECK(full.tts.dynamic_projection_dim == 80);
    CHECK(full.tts.segment_frames == 20);
    CHECK_THROWS_AS(profile_by_name("huge"), Error);
  }

  TEST_CASE("overrides and comments") {
    RunConfig cfg = parse_run_config(
        "# comment\n[run]\nprofile = full\nseed = 5\n\n[bert]\nmask_rate = 0.3  # inline\n");
    CHECK(cfg.seed == 5);
    CHECK(cfg.mel.bins == 80);
    CHECK(cfg.bert.mask_rate == 0.3);
  }

  TEST_CASE("unknown keys, sections and bad values are rejected") {
    CHECK(error_code_of([] { parse_run_config("[bert]\nwidth = 3\n"); }) == Errc::config);
    CHECK(error_code_of([] { parse_run_config("[nowhere]\n"); }) == Errc::config);
    CHECK(error_code_of([] { parse_run_config("[bert]\nd_model = many\n"); }) == Errc::config);
    CHECK(error_code_of([] { parse_run_config("[bert]\nheads = 3\n"); }) == Errc::config);
    CHECK(error_code_of([] { parse_run_config("seed = 1\n"); }) == Errc::config);
  }

  TEST_CASE("shipped config files match their profiles") {
    for (const char* name : {"desk", "full"}) {
      const fs::path file = fs::path(SEGBERT_CONFIG_DIR) / (std::string(name) + ".cfg");
      CHECK(serialize_run_config(load_run_config(file)) == serialize_run_config(profile_by_name(name)));
    }
  }

  TEST_CASE("hash follows content") {
    RunConfig a = desk_profile(), b = desk_profile();
    CHECK(config_hash(a) == config_hash(b));
    b.bert_steps += 1;
    CHECK(config_hash(a) != config_hash(b));
  }
}

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(cli_run({}).code == cli::kExitUsage);
    CHECK(cli_run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(cli_run({"gen"}).code == cli::kExitUsage);
    CHECK(cli_run({"gen", "--out", "x", "--bogus"}).code == cli::kExitUsage);
    CHECK(cli_run({"tts"}).code == cli::kExitUsage);
    CHECK(cli_run({"--help"}).code == cli::kExitOk);
  }

  TEST_CASE("domain errors exit 1") {
    TempDir dir("clierr");
    auto missing = cli_run({"template", "build", "--corpus", (dir / "nope").string(), "--out",
                            (dir / "t.sbtp").string()});
    CHECK(missing.code == cli::kExitDomain);
    CHECK(missing.err.find("segbert:") == 0);
    auto bad_mode = cli_run({"gen", "--out", (dir / "c").string(), "--mode", "wobbly"});
    CHECK(bad_mode.code == cli::kExitDomain);
    io::write_text(dir / "bad.cfg", "[bert]\nwidth = 3\n");
    auto bad_cfg = cli_run({"gen", "--out", (dir / "c").string(), "--config", (dir / "bad.cfg").string()});
    CHECK(bad_cfg.code == cli::kExitDomain);
  }

  TEST_CASE("an existing lock refuses the run") {
    TempDir dir("clilock");
    io::write_text(dir / "c.lock", "");
    CHECK(cli_run({"gen", "--out", (dir / "c").string()}).code == cli::kExitDomain);
    fs::remove(dir / "c.lock");
    CHECK(cli_run({"gen", "--out", (dir / "c").string()}).code == cli::kExitOk);
    CHECK_FALSE(fs::exists(dir / "c.lock"));
  }

  TEST_CASE("selfcheck grad passes and reports the maximum") {
    CliRun r = cli_run({"selfcheck", "grad"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("max relative error") != std::string::npos);
  }

  TEST_CASE("pipeline runs end to end and repeats byte for byte") {
    TempDir dir("clipipe");
    auto pipeline = [&](const std::string& tag) {
      const fs::path root = dir / tag;
      const std::string corpus = (root / "corpus").string();
      const std::string tmpl = (root / "template.sbtp").string();
      const std::string bert = (root / "bert.ckpt").string();
      const std::string tts = (root / "tts.ckpt").string();
      const std::string hyp = (root / "hyp").string();
      fs::create_directories(root / "hyp");
      REQUIRE(cli_run({"gen", "--out", corpus, "--utterances", "4"}).code == 0);
      REQUIRE(cli_run({"template", "build", "--corpus", corpus, "--out", tmpl}).code == 0);
      REQUIRE(cli_run({"bert", "pretrain", "--corpus", corpus, "--template", tmpl, "--out", bert,
                       "--steps", "15"})
                  .code == 0);
      REQUIRE(cli_run({"tts", "train", "--corpus", corpus, "--bert", bert, "--out", tts, "--steps",
                       "15", "--dynamic", "true"})
                  .code == 0);
      CliRun synth = cli_run({"tts", "synth", "--model", tts, "--bert", bert, "--text",
                              corpus + "/utt0000.txt", "--out", hyp + "/utt0000.mel",
                              "--max-frames", "45"});
      REQUIRE(synth.code == 0);
      CHECK(synth.out.find("synthesized") != std::string::npos);
      CliRun ev = cli_run({"eval", "compare", "--ref", corpus, "--hyp", hyp, "--out",
                           (root / "report.csv").string()});
      REQUIRE(ev.code == 0);
      CHECK(ev.out.find("factor,correlation,mse,count,flags") == 0);
      return root;
    };
    const fs::path a = pipeline("a");
    const fs::path b = pipeline("b");
    for (const char* f : {"template.sbtp", "bert.ckpt", "tts.ckpt", "tts.ckpt.loss.csv",
                          "hyp/utt0000.mel", "report.csv"}) {
      INFO(f);
      CHECK(bytes_of(a / f) == bytes_of(b / f));
    }

    // The manifest carries the command and a configuration that reproduces
    // the recorded hash.
    const std::string manifest = io::read_text(a / "tts.ckpt.manifest");
    CHECK(manifest.find("command = segbert tts train") != std::string::npos);
    const std::string marker = "# resolved configuration\n";
    const auto at = manifest.find(marker);
    REQUIRE(at != std::string::npos);
    RunConfig cfg = parse_run_config(manifest.substr(at + marker.size()));
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    CHECK(manifest.find(std::string("config_hash = ") + hash) != std::string::npos);
    CHECK(cfg.tts.dynamic_embedding);
    CHECK(cfg.tts_steps == 15);
  }
}
