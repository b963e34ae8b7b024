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

#include "segbert/checkpoint.hpp"

#include <functional>
#include <numeric>

#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"

namespace segbert::nn {

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors) {
  io::ByteWriter w;
  w.magic("SBTC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f64s(t.value.values());
  }
  return w.buffer();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("SBTC", "checkpoint");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, Errc::format,
          "checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    require(rank <= r.remaining() / 4, Errc::format, "checkpoint: truncated shape of " + t.name);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      n *= d;
      require(n <= r.remaining() / 8, Errc::format,
              "checkpoint: tensor " + t.name + " larger than the remaining payload");
    }
    t.value = Tensor(shape);
    const auto payload = r.f64s(n);
    std::copy(payload.begin(), payload.end(), t.value.values().begin());
    out.push_back(std::move(t));
  }
  require(r.remaining() == 0, Errc::format,
          "checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  for (const Parameter* p : params.all()) tensors.push_back({p->name, p->value});
  io::write_file(path, encode_checkpoint(tensors));
}

void load_checkpoint(ParameterSet& params, std::span<const NamedTensor> tensors) {
  require(tensors.size() == params.size(), Errc::format,
          "checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
              std::to_string(params.size()));
  for (const auto& t : tensors) {
    Parameter* p = params.find(t.name);
    require(p != nullptr, Errc::format, "checkpoint tensor " + t.name + " unknown to model");
    require(p->value.shape() == t.value.shape(), Errc::format,
            "checkpoint tensor " + t.name + " has shape " + t.value.shape_string() +
                ", model expects " + p->value.shape_string());
    p->value = t.value;
  }
}

void load_checkpoint(ParameterSet& params, const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const auto tensors = decode_checkpoint(bytes);
  load_checkpoint(params, tensors);
}

}  // namespace segbert::nn
