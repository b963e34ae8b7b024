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
#include <filesystem>
#include <string>
#include <string_view>

#include "segbert/features.hpp"
#include "segbert/speech_bert.hpp"
#include "segbert/toy_corpus.hpp"
#include "segbert/tts.hpp"

namespace segbert {

// Everything a pipeline run depends on. On disk it is flat "key = value"
// text under [run], [features], [toy], [bert], [tts] and [eval] sections;
// '#' starts a comment. A "profile" key in [run] picks the defaults the
// remaining keys override.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  features::MelConfig mel;
  toy::ToyCorpusSpec toy;
  bert::SpeechBertConfig bert;
  tts::TTSConfig tts;
  std::size_t bert_steps = 2000;
  std::size_t tts_steps = 3000;
  bool eval_per_utterance = false;

  // Module invariants plus cross-module agreement (mel bins, d_E). A zero
  // vocab_size, speaker_count or max_decode_frames means "derive from the
  // corpus" and is accepted here.
  void validate() const;
};

// d_model 32, 2 heads, 2 layers per stack, 8 mel bins, T_S 20, d_E 32.
RunConfig desk_profile();
// 80 mel bins, T_S 20, projection to 80, wider model.
RunConfig full_profile();
RunConfig profile_by_name(std::string_view name);

// Throws Errc::config naming the line for unknown sections or keys and for
// malformed values.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical text listing every key; parse_run_config reads it back exactly.
std::string serialize_run_config(const RunConfig& cfg);

// FNV-1a over the canonical text.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace segbert
