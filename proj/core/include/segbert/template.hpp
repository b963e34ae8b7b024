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

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segbert/corpus.hpp"
#include "segbert/tensor.hpp"

namespace segbert::templ {

// Monotone alignment path between a source of source_len frames and a target
// of target_len frames, from (0, 0) to (source_len-1, target_len-1).
struct DtwMapping {
  std::vector<std::pair<std::size_t, std::size_t>> path;  // (source, target)
  std::size_t source_len = 0;
  std::size_t target_len = 0;

  // Same path with the roles of source and target swapped.
  DtwMapping inverted() const;
  friend bool operator==(const DtwMapping&, const DtwMapping&) = default;
};

struct DtwResult {
  DtwMapping mapping;
  double cost = 0.0;
};

using FrameCost = std::function<double(std::span<const double>, std::span<const double>)>;

double squared_euclidean(std::span<const double> a, std::span<const double> b);

// Minimum-cost path under steps (1,0), (0,1), (1,1). Backtrace ties prefer
// the diagonal, then (1,0), then (0,1).
DtwResult dtw_align(const Tensor& source, const Tensor& target);
DtwResult dtw_align(const Tensor& source, const Tensor& target, const FrameCost& cost);

// Target frame j is the mean of every source frame i with (i, j) on the path.
Tensor warp_to(const Tensor& source, std::size_t target_len, const DtwMapping& mapping);

struct AcousticTemplate {
  Tensor frames;  // L x B
  double frame_shift_ms = 12.5;

  std::size_t length() const noexcept { return frames.rows(); }
};

// Segments grouped by phone id; iteration order is phone id ascending and,
// within a phone, the order in which segments were added.
using PhoneSegmentSet = std::map<std::string, std::vector<Tensor>>;

PhoneSegmentSet collect_phone_segments(std::span<const features::Utterance> corpus);

// Successive DTW averaging: the first segment seeds the template; each later
// segment is aligned against it, the shorter operand is warped onto the
// longer one and the two are averaged.
AcousticTemplate build_template(const PhoneSegmentSet& segments);

// K frames of filler: the first K template frames, repeating the template
// as often as needed when K exceeds its length.
Tensor pad_mask(const AcousticTemplate& t, std::size_t frames);

void save_template(const AcousticTemplate& t, const std::filesystem::path& path);
AcousticTemplate load_template(const std::filesystem::path& path);

}  // namespace segbert::templ
