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

#include "segbert/error.hpp"

namespace segbert {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::dimension: return "dimension";
    case Errc::degenerate_mask: return "degenerate-mask";
    case Errc::state: return "state";
    case Errc::poisoned_gradient: return "poisoned-gradient";
    case Errc::too_short: return "too-short";
    case Errc::empty_input: return "empty-input";
    case Errc::bounds: return "bounds";
    case Errc::vocabulary: return "vocabulary";
    case Errc::undefined_correlation: return "undefined-correlation";
    case Errc::alignment_parse: return "alignment-parse";
    case Errc::alignment_overlap: return "alignment-overlap";
    case Errc::alignment_gap: return "alignment-gap";
    case Errc::alignment_beyond_length: return "alignment-beyond-length";
    case Errc::alignment_malformed_range: return "alignment-malformed-range";
    case Errc::format: return "format";
    case Errc::io: return "io";
    case Errc::config: return "config";
  }
  return "unknown";
}

namespace {

std::string decorate(Errc code, const std::string& message,
                     std::optional<std::size_t> index) {
  std::string out = std::string(errc_name(code)) + " error";
  if (index) out += " at index " + std::to_string(*index);
  return out + ": " + message;
}

}  // namespace

Error::Error(Errc code, const std::string& message, std::optional<std::size_t> index)
    : std::runtime_error(decorate(code, message, index)), code_(code), index_(index) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

void fail_at(Errc code, std::size_t index, const std::string& message) {
  throw Error(code, message, index);
}

}  // namespace segbert
