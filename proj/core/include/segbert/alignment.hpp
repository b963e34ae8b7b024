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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace segbert::features {

struct PhoneInterval {
  std::string phone_id;
  std::uint32_t start = 0;  // inclusive frame
  std::uint32_t end = 0;    // exclusive frame

  std::uint32_t frames() const noexcept { return end - start; }
  friend bool operator==(const PhoneInterval&, const PhoneInterval&) = default;
};

// Inclusive phone-index range [first, last].
struct SyllableRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;
  friend bool operator==(const SyllableRange&, const SyllableRange&) = default;
};

struct AlignmentRecord {
  std::vector<PhoneInterval> phones;
  std::vector<SyllableRange> syllables;

  std::uint32_t end_frame() const noexcept { return phones.empty() ? 0 : phones.back().end; }
  friend bool operator==(const AlignmentRecord&, const AlignmentRecord&) = default;
};

// Checks contiguity (first phone starts at 0, each start equals the previous
// end, every phone at least one frame), the optional mel length bound, and
// that syllables are ordered, non-overlapping and in range. Each violation is
// a distinct Errc naming the offending phone or syllable index.
void validate_alignment(const AlignmentRecord& a,
                        std::optional<std::size_t> mel_frames = std::nullopt);

// Text format:
//   PHONES n
//   <phone_id> <start> <end>     (n lines)
//   SYLLABLES m
//   <first_idx> <last_idx>       (m lines)
AlignmentRecord parse_alignment(std::string_view text,
                                std::optional<std::size_t> mel_frames = std::nullopt);
std::string serialize_alignment(const AlignmentRecord& a);

// Frame span [start, end) for each syllable.
std::vector<std::pair<std::uint32_t, std::uint32_t>> syllable_frame_spans(
    const AlignmentRecord& a);

}  // namespace segbert::features
