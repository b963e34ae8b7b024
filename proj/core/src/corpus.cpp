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

#include "segbert/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"
#include "segbert/parallel.hpp"

namespace segbert::features {

namespace {

template <typename T>
T parse_unsigned(std::string_view tok, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    fail(Errc::format, std::string("token file: bad ") + what + " '" + std::string(tok) + "'");
  return v;
}

}  // namespace

TokenLine parse_token_line(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  TokenLine line;
  if (!(in >> tok) || tok.rfind("spk:", 0) != 0)
    fail(Errc::format, "token file must start with spk:<id>");
  line.speaker_id = parse_unsigned<std::uint32_t>(std::string_view(tok).substr(4), "speaker id");
  while (in >> tok) line.tokens.push_back(parse_unsigned<std::size_t>(tok, "token id"));
  require(!line.tokens.empty(), Errc::format, "token file holds no phoneme tokens");
  return line;
}

std::string serialize_token_line(const TokenLine& line) {
  std::string out = "spk:" + std::to_string(line.speaker_id);
  for (std::size_t t : line.tokens) out += " " + std::to_string(t);
  return out + "\n";
}

void validate_utterance(const Utterance& u) {
  require(!u.phonemes.empty(), Errc::empty_input, u.id + ": empty phoneme sequence");
  require(u.mel.num_frames() >= 1, Errc::empty_input, u.id + ": empty mel");
  validate_alignment(u.alignment, u.mel.num_frames());
  require(u.alignment.phones.size() == u.phonemes.size(), Errc::format,
          u.id + ": alignment has " + std::to_string(u.alignment.phones.size()) +
              " phones for " + std::to_string(u.phonemes.size()) + " tokens");
}

Utterance load_utterance(const std::filesystem::path& dir, const std::string& id) {
  Utterance u;
  u.id = id;
  u.mel = load_mel(dir / (id + ".mel"));
  u.alignment = parse_alignment(io::read_text(dir / (id + ".align")), u.mel.num_frames());
  const TokenLine line = parse_token_line(io::read_text(dir / (id + ".txt")));
  u.phonemes = line.tokens;
  u.speaker_id = line.speaker_id;
  if (const auto wav = dir / (id + ".wav"); std::filesystem::exists(wav))
    u.waveform = load_wav(wav);
  validate_utterance(u);
  return u;
}

std::vector<Utterance> load_corpus(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), Errc::io, "not a corpus directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".mel")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  require(!ids.empty(), Errc::empty_input, "corpus " + dir.string() + " has no .mel files");
  std::vector<Utterance> out(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { out[i] = load_utterance(dir, ids[i]); });
  return out;
}

void save_utterance(const Utterance& u, const std::filesystem::path& dir) {
  save_mel(u.mel, dir / (u.id + ".mel"));
  io::write_text(dir / (u.id + ".align"), serialize_alignment(u.alignment));
  io::write_text(dir / (u.id + ".txt"), serialize_token_line({u.speaker_id, u.phonemes}));
  if (u.waveform) save_wav(*u.waveform, dir / (u.id + ".wav"));
}

std::vector<PhoneSegment> phone_segments(const Utterance& u) {
  std::vector<PhoneSegment> out;
  out.reserve(u.alignment.phones.size());
  for (const auto& p : u.alignment.phones)
    out.push_back({p.phone_id, u.mel.frames.slice_rows(p.start, p.end)});
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> syllable_spans(const Utterance& u) {
  return syllable_frame_spans(u.alignment);
}

}  // namespace segbert::features
