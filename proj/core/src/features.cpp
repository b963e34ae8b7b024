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

#include "segbert/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"

namespace segbert::features {

namespace {
constexpr std::uint32_t kMelVersion = 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t samples_for_ms(double ms, double sample_rate) {
  return static_cast<std::size_t>(std::llround(ms * sample_rate / 1000.0));
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t frame_count(std::size_t length, std::size_t window, std::size_t shift) {
  if (length < window || shift == 0) return 0;
  return (length - window) / shift + 1;
}

void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  require(n > 0 && std::has_single_bit(n), Errc::dimension,
          "fft size must be a power of two, got " + std::to_string(n));
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    for (std::size_t start = 0; start < n; start += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto even = data[start + k];
        const auto odd = data[start + k + len / 2] * w;
        data[start + k] = even + odd;
        data[start + k + len / 2] = even - odd;
        w *= step;
      }
    }
  }
}

MelFilterbank::MelFilterbank(std::size_t bins, std::size_t fft_size, double sample_rate,
                             double fmin, double fmax)
    : weights_(bins, fft_size / 2 + 1), fft_size_(fft_size) {
  require(bins >= 1, Errc::config, "mel filterbank needs at least one bin");
  require(fmin >= 0.0 && fmin < fmax, Errc::config, "mel filterbank needs 0 <= fmin < fmax");
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(bins + 1));
  centers_.assign(edges.begin() + 1, edges.end() - 1);
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (std::size_t k = 0; k < weights_.cols(); ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      weights_(b, k) = w;
    }
  }
}

void MelFilterbank::apply(std::span<const double> power, std::span<double> out) const {
  for (std::size_t b = 0; b < weights_.rows(); ++b) {
    double acc = 0.0;
    const auto w = weights_.row(b);
    for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * power[k];
    out[b] = acc;
  }
}

MelSpectrogram compute_log_mel(const Waveform& w, const MelConfig& cfg) {
  require(w.sample_rate > 0.0, Errc::config, "sample rate must be positive");
  require(cfg.window_ms >= cfg.shift_ms && cfg.shift_ms > 0.0, Errc::config,
          "window must be at least one shift long");
  require(cfg.fmax <= w.sample_rate / 2.0, Errc::config, "fmax above Nyquist");
  require(cfg.floor > 0.0, Errc::config, "energy floor must be positive");
  const std::size_t window = samples_for_ms(cfg.window_ms, w.sample_rate);
  const std::size_t shift = samples_for_ms(cfg.shift_ms, w.sample_rate);
  const std::size_t frames = frame_count(w.samples.size(), window, shift);
  if (frames == 0)
    fail(Errc::too_short, "waveform of " + std::to_string(w.samples.size()) +
                              " samples is shorter than one " + std::to_string(window) +
                              "-sample window");

  const std::size_t n_fft = next_pow2(window);
  const MelFilterbank bank(cfg.bins, n_fft, w.sample_rate, cfg.fmin, cfg.fmax);
  std::vector<double> hann(window);
  for (std::size_t i = 0; i < window; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                   static_cast<double>(window));

  MelSpectrogram mel{Tensor(frames, cfg.bins), cfg.shift_ms};
  std::vector<std::complex<double>> buf(n_fft);
  std::vector<double> power(n_fft / 2 + 1);
  const double log_floor = std::log(cfg.floor);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < window; ++i) buf[i] = w.samples[t * shift + i] * hann[i];
    fft(buf);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    auto row = mel.frames.row(t);
    bank.apply(power, row);
    for (double& v : row) {
      const double e = std::log(std::max(cfg.floor, v));
      v = std::isfinite(e) ? e : log_floor;
    }
  }
  return mel;
}

std::vector<std::uint8_t> encode_mel(const MelSpectrogram& mel, const char* magic) {
  io::ByteWriter w;
  w.magic(magic);
  w.u32(kMelVersion);
  w.u32(static_cast<std::uint32_t>(mel.num_frames()));
  w.u32(static_cast<std::uint32_t>(mel.bins()));
  w.f64(mel.frame_shift_ms);
  w.f64s(mel.frames.values());
  return w.buffer();
}

MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, const char* magic) {
  io::ByteReader r(bytes);
  r.expect_magic(magic, "mel file");
  const std::uint32_t version = r.u32();
  require(version == kMelVersion, Errc::format,
          "mel file: unsupported version " + std::to_string(version));
  const std::uint32_t frames = r.u32();
  const std::uint32_t bins = r.u32();
  const double shift = r.f64();
  const std::size_t count = static_cast<std::size_t>(frames) * bins;
  require(r.remaining() == count * 8, Errc::format,
          "mel file: payload of " + std::to_string(r.remaining()) + " bytes, expected " +
              std::to_string(count * 8));
  MelSpectrogram mel{Tensor::matrix(frames, bins, r.f64s(count)), shift};
  require(mel.frames.all_finite(), Errc::format, "mel file: non-finite values");
  return mel;
}

void save_mel(const MelSpectrogram& mel, const std::filesystem::path& path) {
  io::write_file(path, encode_mel(mel));
}

MelSpectrogram load_mel(const std::filesystem::path& path) {
  return decode_mel(io::read_file(path));
}

void save_wav(const Waveform& w, const std::filesystem::path& path) {
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 4);
  const auto rate = static_cast<std::uint32_t>(std::llround(w.sample_rate));
  io::ByteWriter out;
  out.magic("RIFF");
  out.u32(36 + data_bytes);
  out.magic("WAVE");
  out.magic("fmt ");
  out.u32(16);
  out.u32(3 | (1u << 16));  // IEEE float, mono
  out.u32(rate);
  out.u32(rate * 4);
  out.u32(4 | (32u << 16));  // block align, bits per sample
  out.magic("data");
  out.u32(data_bytes);
  for (double s : w.samples) out.u32(std::bit_cast<std::uint32_t>(static_cast<float>(s)));
  io::write_file(path, out.buffer());
}

Waveform load_wav(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  r.expect_magic("RIFF", "wav");
  r.u32();
  r.expect_magic("WAVE", "wav");
  std::uint32_t format = 0, channels = 0, bits = 0;
  Waveform w;
  while (r.remaining() >= 8) {
    const std::string id = r.bytes(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      const std::uint32_t fc = r.u32();
      format = fc & 0xffff;
      channels = fc >> 16;
      w.sample_rate = r.u32();
      r.u32();
      bits = r.u32() >> 16;
      if (size > 16) r.bytes(size - 16);
    } else if (id == "data") {
      require(channels == 1, Errc::format, "wav: only mono audio is supported");
      if (format == 3 && bits == 32) {
        for (std::uint32_t i = 0; i < size / 4; ++i)
          w.samples.push_back(std::bit_cast<float>(r.u32()));
      } else if (format == 1 && bits == 16) {
        const std::string raw = r.bytes(size);
        for (std::size_t i = 0; i + 1 < raw.size(); i += 2) {
          const auto lo = static_cast<std::uint8_t>(raw[i]);
          const auto hi = static_cast<std::uint8_t>(raw[i + 1]);
          const auto v = static_cast<std::int16_t>(lo | (hi << 8));
          w.samples.push_back(static_cast<double>(v) / 32768.0);
        }
      } else {
        fail(Errc::format, "wav: unsupported sample format");
      }
      return w;
    } else {
      r.bytes(size + (size & 1));
    }
  }
  fail(Errc::format, "wav: no data chunk in " + path.string());
}

}  // namespace segbert::features
