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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace segbert {

enum class Errc {
  dimension,
  degenerate_mask,
  state,
  poisoned_gradient,
  too_short,
  empty_input,
  bounds,
  vocabulary,
  undefined_correlation,
  alignment_parse,
  alignment_overlap,
  alignment_gap,
  alignment_beyond_length,
  alignment_malformed_range,
  format,
  io,
  config,
};

const char* errc_name(Errc code);

// Every failure in the library is reported through this type. `index()` is set
// when the error refers to a specific element (a phone, a syllable, a row).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  Errc code_;
  std::optional<std::size_t> index_;
};

[[noreturn]] void fail(Errc code, const std::string& message);
[[noreturn]] void fail_at(Errc code, std::size_t index, const std::string& message);

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace segbert
