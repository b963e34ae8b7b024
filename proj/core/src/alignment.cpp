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

#include "segbert/alignment.hpp"

#include <charconv>
#include <sstream>

#include "segbert/error.hpp"

namespace segbert::features {

void validate_alignment(const AlignmentRecord& a, std::optional<std::size_t> mel_frames) {
  for (std::size_t i = 0; i < a.phones.size(); ++i) {
    const auto& p = a.phones[i];
    const std::uint32_t expected = i == 0 ? 0 : a.phones[i - 1].end;
    if (p.start < expected)
      fail_at(Errc::alignment_overlap, i,
              "phone " + p.phone_id + " starts at " + std::to_string(p.start) +
                  " before the previous end " + std::to_string(expected));
    if (p.start > expected)
      fail_at(Errc::alignment_gap, i,
              "phone " + p.phone_id + " starts at " + std::to_string(p.start) +
                  ", leaving a gap after " + std::to_string(expected));
    if (p.end <= p.start)
      fail_at(Errc::alignment_malformed_range, i,
              "phone " + p.phone_id + " spans no frames");
    if (mel_frames && p.end > *mel_frames)
      fail_at(Errc::alignment_beyond_length, i,
              "phone " + p.phone_id + " ends at " + std::to_string(p.end) +
                  " beyond the " + std::to_string(*mel_frames) + "-frame mel");
  }
  for (std::size_t s = 0; s < a.syllables.size(); ++s) {
    const auto& syl = a.syllables[s];
    if (syl.first > syl.last)
      fail_at(Errc::alignment_malformed_range, s,
              "syllable range (" + std::to_string(syl.first) + "," + std::to_string(syl.last) +
                  ") is reversed");
    if (syl.last >= a.phones.size())
      fail_at(Errc::alignment_malformed_range, s,
              "syllable range ends at phone " + std::to_string(syl.last) + " of " +
                  std::to_string(a.phones.size()));
    if (s > 0 && syl.first <= a.syllables[s - 1].last)
      fail_at(Errc::alignment_malformed_range, s,
              "syllable overlaps or precedes the previous syllable");
  }
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Next non-blank line split into whitespace tokens; empty at end of input.
  std::vector<std::string> next() {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      std::istringstream in{std::string(line)};
      std::vector<std::string> tokens;
      for (std::string tok; in >> tok;) tokens.push_back(tok);
      if (!tokens.empty()) return tokens;
    }
    return {};
  }

  std::size_t line() const noexcept { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

std::uint32_t to_u32(const std::string& tok, const LineReader& r) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    fail_at(Errc::alignment_parse, r.line(), "expected an unsigned integer, got '" + tok + "'");
  return v;
}

std::uint32_t header(LineReader& r, const char* keyword) {
  const auto tokens = r.next();
  if (tokens.size() != 2 || tokens[0] != keyword)
    fail_at(Errc::alignment_parse, r.line(), std::string("expected '") + keyword + " <count>'");
  return to_u32(tokens[1], r);
}

}  // namespace

AlignmentRecord parse_alignment(std::string_view text, std::optional<std::size_t> mel_frames) {
  LineReader r(text);
  AlignmentRecord a;
  const std::uint32_t n = header(r, "PHONES");
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto tokens = r.next();
    if (tokens.size() != 3)
      fail_at(Errc::alignment_parse, r.line(), "expected '<phone_id> <start> <end>'");
    a.phones.push_back({tokens[0], to_u32(tokens[1], r), to_u32(tokens[2], r)});
  }
  const std::uint32_t m = header(r, "SYLLABLES");
  for (std::uint32_t i = 0; i < m; ++i) {
    const auto tokens = r.next();
    if (tokens.size() != 2)
      fail_at(Errc::alignment_parse, r.line(), "expected '<first_idx> <last_idx>'");
    a.syllables.push_back({to_u32(tokens[0], r), to_u32(tokens[1], r)});
  }
  if (!r.next().empty()) fail_at(Errc::alignment_parse, r.line(), "trailing content");
  validate_alignment(a, mel_frames);
  return a;
}

std::string serialize_alignment(const AlignmentRecord& a) {
  std::string out = "PHONES " + std::to_string(a.phones.size()) + "\n";
  for (const auto& p : a.phones)
    out += p.phone_id + " " + std::to_string(p.start) + " " + std::to_string(p.end) + "\n";
  out += "SYLLABLES " + std::to_string(a.syllables.size()) + "\n";
  for (const auto& s : a.syllables)
    out += std::to_string(s.first) + " " + std::to_string(s.last) + "\n";
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> syllable_frame_spans(
    const AlignmentRecord& a) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;
  spans.reserve(a.syllables.size());
  for (const auto& s : a.syllables)
    spans.emplace_back(a.phones.at(s.first).start, a.phones.at(s.last).end);
  return spans;
}

}  // namespace segbert::features
