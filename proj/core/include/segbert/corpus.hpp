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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "segbert/alignment.hpp"
#include "segbert/features.hpp"

namespace segbert::features {

// Text side of an utterance; on disk as "spk:<id> tok tok ...".
struct TokenLine {
  std::uint32_t speaker_id = 0;
  std::vector<std::size_t> tokens;
  friend bool operator==(const TokenLine&, const TokenLine&) = default;
};

TokenLine parse_token_line(std::string_view text);
std::string serialize_token_line(const TokenLine& line);

struct Utterance {
  std::string id;
  std::vector<std::size_t> phonemes;
  MelSpectrogram mel;
  AlignmentRecord alignment;
  std::uint32_t speaker_id = 0;
  std::optional<Waveform> waveform;  // present when the corpus ships <id>.wav
};

// Throws when the parts disagree: phone count vs token count, or an alignment
// running past the mel.
void validate_utterance(const Utterance& u);

// Corpus directory layout: <id>.mel, <id>.align, <id>.txt and optionally
// <id>.wav. Utterances are returned sorted by id.
Utterance load_utterance(const std::filesystem::path& dir, const std::string& id);
std::vector<Utterance> load_corpus(const std::filesystem::path& dir);
void save_utterance(const Utterance& u, const std::filesystem::path& dir);

struct PhoneSegment {
  std::string phone_id;
  Tensor frames;  // rows [start, end) of the mel
};

std::vector<PhoneSegment> phone_segments(const Utterance& u);
std::vector<std::pair<std::uint32_t, std::uint32_t>> syllable_spans(const Utterance& u);

}  // namespace segbert::features
