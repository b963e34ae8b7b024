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

#include "segbert/toy_corpus.hpp"

#include <cmath>
#include <cstdio>

#include "segbert/error.hpp"
#include "segbert/random.hpp"

namespace segbert::toy {

const char* prosody_mode_name(ProsodyMode m) {
  switch (m) {
    case ProsodyMode::independent: return "independent";
    case ProsodyMode::chained: return "chained";
    case ProsodyMode::ambiguous_pair: return "ambiguous-pair";
  }
  return "?";
}

ProsodyMode parse_prosody_mode(std::string_view name) {
  for (auto m : {ProsodyMode::independent, ProsodyMode::chained, ProsodyMode::ambiguous_pair})
    if (name == prosody_mode_name(m)) return m;
  fail(Errc::config, "unknown prosody mode '" + std::string(name) +
                         "' (expected independent, chained or ambiguous-pair)");
}

void ToyCorpusSpec::validate() const {
  require(utterance_count >= 1 && vocab_size >= 1 && syllables >= 1 && phones_per_syllable >= 1 &&
              mel_bins >= 1,
          Errc::config, "toy corpus counts must be >= 1");
  require(min_syllable_frames >= phones_per_syllable, Errc::config,
          "every phone needs at least one frame");
  require(max_syllable_frames >= min_syllable_frames, Errc::config,
          "max_syllable_frames below min_syllable_frames");
  require(mode != ProsodyMode::ambiguous_pair || utterance_count % 2 == 0, Errc::config,
          "ambiguous-pair mode needs an even utterance count");
  require(noise >= 0.0 && contour_scale >= 0.0, Errc::config,
          "noise and contour_scale must be non-negative");
}

namespace {

struct Text {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> syllable_frames;
};

Text draw_text(const ToyCorpusSpec& spec, Rng& rng) {
  Text t;
  for (std::size_t s = 0; s < spec.syllables; ++s) {
    for (std::size_t p = 0; p < spec.phones_per_syllable; ++p)
      t.tokens.push_back(static_cast<std::size_t>(rng.index(spec.vocab_size)));
    const std::size_t range = spec.max_syllable_frames - spec.min_syllable_frames + 1;
    t.syllable_frames.push_back(spec.min_syllable_frames + static_cast<std::size_t>(rng.index(range)));
  }
  return t;
}

std::vector<double> syllable_levels(const ToyCorpusSpec& spec, Rng& rng, int rendition) {
  const std::size_t k = spec.syllables;
  std::vector<double> level(k);
  switch (spec.mode) {
    case ProsodyMode::independent:
      for (double& v : level) v = rng.uniform(-1.0, 1.0);
      break;
    case ProsodyMode::chained:
      level[0] = rng.uniform(-1.0, 1.0);
      for (std::size_t s = 1; s < k; ++s) level[s] = std::sin(2.2 * level[s - 1] + 0.7);
      break;
    case ProsodyMode::ambiguous_pair:
      // Rendition 0 rises, rendition 1 falls; their mean is flat.
      for (std::size_t s = 0; s < k; ++s) {
        const double ramp = k == 1 ? 1.0 : -1.0 + 2.0 * static_cast<double>(s) / static_cast<double>(k - 1);
        level[s] = rendition == 0 ? ramp : -ramp;
      }
      break;
  }
  for (double& v : level) v *= spec.contour_scale;
  return level;
}

features::Utterance render(const ToyCorpusSpec& spec, const Tensor& base, const Text& text,
                           const std::vector<double>& levels, std::size_t index, Rng& rng) {
  features::Utterance u;
  char id[32];
  std::snprintf(id, sizeof id, "utt%04zu", index);
  u.id = id;
  u.phonemes = text.tokens;

  auto& phones = u.alignment.phones;
  std::vector<double> centres;
  std::uint32_t frame = 0;
  for (std::size_t s = 0; s < spec.syllables; ++s) {
    const std::size_t n = text.syllable_frames[s];
    centres.push_back(static_cast<double>(frame) + 0.5 * static_cast<double>(n - 1));
    const auto first = static_cast<std::uint32_t>(phones.size());
    for (std::size_t p = 0; p < spec.phones_per_syllable; ++p) {
      const std::size_t len = n / spec.phones_per_syllable + (p < n % spec.phones_per_syllable);
      char name[16];
      std::snprintf(name, sizeof name, "p%03zu", text.tokens[phones.size()]);
      phones.push_back({name, frame, frame + static_cast<std::uint32_t>(len)});
      frame += static_cast<std::uint32_t>(len);
    }
    u.alignment.syllables.push_back({first, static_cast<std::uint32_t>(phones.size() - 1)});
  }

  const std::size_t bins = spec.mel_bins;
  Tensor mel(frame, bins);
  std::size_t phone = 0;
  for (std::uint32_t t = 0; t < frame; ++t) {
    while (t >= phones[phone].end) ++phone;
    const double x = static_cast<double>(t);
    double c = levels.front();
    if (x >= centres.back()) {
      c = levels.back();
    } else if (x > centres.front()) {
      std::size_t s = 0;
      while (x > centres[s + 1]) ++s;
      const double w = (x - centres[s]) / (centres[s + 1] - centres[s]);
      c = (1.0 - w) * levels[s] + w * levels[s + 1];
    }
    const auto b_row = base.row(text.tokens[phone]);
    for (std::size_t b = 0; b < bins; ++b) {
      const double tilt = bins == 1 ? 1.0 : 1.0 - 0.5 * static_cast<double>(b) / static_cast<double>(bins - 1);
      mel(t, b) = b_row[b] + c * tilt + spec.noise * rng.normal();
    }
  }
  u.mel.frames = std::move(mel);
  features::validate_utterance(u);
  return u;
}

}  // namespace

std::vector<features::Utterance> generate_toy_corpus(const ToyCorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Tensor base(spec.vocab_size, spec.mel_bins);
  for (double& v : base.values()) v = rng.uniform(-2.0, 2.0);

  std::vector<features::Utterance> out;
  out.reserve(spec.utterance_count);
  const bool paired = spec.mode == ProsodyMode::ambiguous_pair;
  const std::size_t texts = paired ? spec.utterance_count / 2 : spec.utterance_count;
  for (std::size_t k = 0; k < texts; ++k) {
    Rng local(rng.fork_seed());
    const Text text = draw_text(spec, local);
    for (int r = 0; r < (paired ? 2 : 1); ++r) {
      const auto levels = syllable_levels(spec, local, r);
      out.push_back(render(spec, base, text, levels, out.size(), local));
    }
  }
  return out;
}

void write_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& dir) {
  const auto corpus = generate_toy_corpus(spec);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), Errc::io,
          "cannot create corpus directory " + dir.string());
  for (const auto& u : corpus) features::save_utterance(u, dir);
}

}  // namespace segbert::toy
