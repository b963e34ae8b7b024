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

#include "segbert/template.hpp"

#include <algorithm>
#include <limits>

#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"

namespace segbert::templ {

DtwMapping DtwMapping::inverted() const {
  DtwMapping out;
  out.source_len = target_len;
  out.target_len = source_len;
  out.path.reserve(path.size());
  for (const auto& [i, j] : path) out.path.emplace_back(j, i);
  return out;
}

double squared_euclidean(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return acc;
}

DtwResult dtw_align(const Tensor& source, const Tensor& target) {
  return dtw_align(source, target, squared_euclidean);
}

DtwResult dtw_align(const Tensor& source, const Tensor& target, const FrameCost& cost) {
  const std::size_t n = source.rows(), m = target.rows();
  require(n > 0 && m > 0, Errc::empty_input, "dtw_align on an empty segment");
  require(source.cols() == target.cols(), Errc::dimension,
          "dtw_align bin mismatch: " + source.shape_string() + " vs " + target.shape_string());

  constexpr double inf = std::numeric_limits<double>::infinity();
  Tensor acc(n, m, inf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost(source.row(i), target.row(j));
      if (i == 0 && j == 0) {
        acc(i, j) = c;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = acc(i - 1, j - 1);
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = c + best;
    }
  }

  DtwResult result;
  result.cost = acc(n - 1, m - 1);
  result.mapping.source_len = n;
  result.mapping.target_len = m;
  auto& path = result.mapping.path;
  std::size_t i = n - 1, j = m - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = acc(i - 1, j - 1);
      const double up = acc(i - 1, j);
      const double left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return result;
}

Tensor warp_to(const Tensor& source, std::size_t target_len, const DtwMapping& mapping) {
  require(mapping.source_len == source.rows() && mapping.target_len == target_len,
          Errc::dimension,
          "warp_to: mapping " + std::to_string(mapping.source_len) + "->" +
              std::to_string(mapping.target_len) + " does not fit source of " +
              std::to_string(source.rows()) + " frames onto " + std::to_string(target_len));
  const std::size_t bins = source.cols();
  Tensor out(target_len, bins);
  std::vector<std::size_t> counts(target_len, 0);
  for (const auto& [i, j] : mapping.path) {
    require(i < source.rows() && j < target_len, Errc::dimension, "warp_to: path out of range");
    auto dst = out.row(j);
    const auto src = source.row(i);
    for (std::size_t k = 0; k < bins; ++k) dst[k] += src[k];
    ++counts[j];
  }
  for (std::size_t j = 0; j < target_len; ++j) {
    require(counts[j] > 0, Errc::dimension,
            "warp_to: target frame " + std::to_string(j) + " receives no source frame");
    if (counts[j] == 1) continue;
    const double inv = 1.0 / static_cast<double>(counts[j]);
    for (double& v : out.row(j)) v *= inv;
  }
  return out;
}

PhoneSegmentSet collect_phone_segments(std::span<const features::Utterance> corpus) {
  PhoneSegmentSet set;
  for (const auto& u : corpus)
    for (auto& seg : features::phone_segments(u)) set[seg.phone_id].push_back(std::move(seg.frames));
  return set;
}

namespace {

Tensor average(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = 0.5 * (a[k] + b[k]);
  return out;
}

}  // namespace

AcousticTemplate build_template(const PhoneSegmentSet& segments) {
  AcousticTemplate t;
  bool seeded = false;
  for (const auto& [phone, instances] : segments) {
    for (const Tensor& seg : instances) {
      require(seg.rows() >= 1, Errc::empty_input, "phone " + phone + " has an empty segment");
      if (!seeded) {
        t.frames = seg;
        seeded = true;
        continue;
      }
      // One alignment per update, incoming segment as source.
      const DtwMapping mapping = dtw_align(seg, t.frames).mapping;
      if (seg.rows() >= t.frames.rows()) {
        const Tensor warped = warp_to(t.frames, seg.rows(), mapping.inverted());
        t.frames = average(warped, seg);
      } else {
        const Tensor warped = warp_to(seg, t.frames.rows(), mapping);
        t.frames = average(warped, t.frames);
      }
    }
  }
  require(seeded, Errc::empty_input, "build_template needs at least one segment");
  return t;
}

Tensor pad_mask(const AcousticTemplate& t, std::size_t frames) {
  const std::size_t len = t.length();
  require(len >= 1, Errc::empty_input, "pad_mask with an empty template");
  Tensor out(frames, t.frames.cols());
  for (std::size_t k = 0; k < frames; ++k) {
    const auto src = t.frames.row(k % len);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

void save_template(const AcousticTemplate& t, const std::filesystem::path& path) {
  io::write_file(path, features::encode_mel({t.frames, t.frame_shift_ms}, "SBTP"));
}

AcousticTemplate load_template(const std::filesystem::path& path) {
  auto mel = features::decode_mel(io::read_file(path), "SBTP");
  require(mel.num_frames() >= 1, Errc::format, "template file holds no frames");
  return {std::move(mel.frames), mel.frame_shift_ms};
}

}  // namespace segbert::templ
