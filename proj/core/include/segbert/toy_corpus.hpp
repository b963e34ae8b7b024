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
#include <string_view>
#include <vector>

#include "segbert/corpus.hpp"

namespace segbert::toy {

enum class ProsodyMode {
  independent,     // every syllable draws its own contour level
  chained,         // syllable k's level is a fixed function of syllable k-1's
  ambiguous_pair,  // each text is emitted twice, once high and once low
};

const char* prosody_mode_name(ProsodyMode m);
ProsodyMode parse_prosody_mode(std::string_view name);

struct ToyCorpusSpec {
  std::size_t utterance_count = 8;  // even in ambiguous_pair mode
  std::size_t vocab_size = 8;
  std::size_t syllables = 5;
  std::size_t phones_per_syllable = 2;
  std::size_t min_syllable_frames = 10;
  std::size_t max_syllable_frames = 14;
  std::size_t mel_bins = 8;
  ProsodyMode mode = ProsodyMode::independent;
  double contour_scale = 1.0;
  double noise = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

// Mel rows are base[phoneme] + contour(t) * tilt + noise, where tilt weighs
// low bins more than high ones. Contours are piecewise linear between
// syllable levels so neighbouring syllables join smoothly.
std::vector<features::Utterance> generate_toy_corpus(const ToyCorpusSpec& spec);

// Writes <id>.mel / <id>.align / <id>.txt for every utterance.
void write_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& dir);

}  // namespace segbert::toy
