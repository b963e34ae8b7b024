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
#include <span>
#include <string>
#include <vector>

#include "segbert/layers.hpp"

namespace segbert::nn {

// Parameter checkpoint layout (little-endian):
//   "SBTC" | version u32 | count u32 |
//   count x { name_len u32 | name utf-8 | rank u32 | dims u32[rank] | f64[prod(dims)] }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
// Throws Errc::format on bad magic, unknown version, truncation or trailing bytes.
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
// The file must hold exactly the set's parameter names with matching shapes.
void load_checkpoint(ParameterSet& params, const std::filesystem::path& path);
void load_checkpoint(ParameterSet& params, std::span<const NamedTensor> tensors);

}  // namespace segbert::nn
