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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "segbert/tensor.hpp"

namespace segbert::features {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  double sample_rate = 16000.0;
};

// frames is T x B log mel energies.
struct MelSpectrogram {
  Tensor frames;
  double frame_shift_ms = 12.5;

  std::size_t num_frames() const noexcept { return frames.rows(); }
  std::size_t bins() const noexcept { return frames.cols(); }
  friend bool operator==(const MelSpectrogram&, const MelSpectrogram&) = default;
};

struct MelConfig {
  std::size_t bins = 80;
  double shift_ms = 12.5;
  double window_ms = 50.0;
  double fmin = 0.0;
  double fmax = 8000.0;
  double floor = 1e-10;
};

double hz_to_mel(double hz);  // HTK: 2595 log10(1 + f / 700)
double mel_to_hz(double mel);

std::size_t samples_for_ms(double ms, double sample_rate);
std::size_t next_pow2(std::size_t n);

// Closed-form frame count: floor((len - window) / shift) + 1, or 0 when the
// signal is shorter than one window.
std::size_t frame_count(std::size_t length, std::size_t window, std::size_t shift);

// In-place radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data);

// Triangular filters (peak 1) evaluated at FFT bin frequencies.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t bins, std::size_t fft_size, double sample_rate, double fmin,
                double fmax);

  // weights() is bins x (fft_size / 2 + 1).
  const Tensor& weights() const noexcept { return weights_; }
  const std::vector<double>& center_hz() const noexcept { return centers_; }
  std::size_t fft_size() const noexcept { return fft_size_; }

  // Applies the filters to one power spectrum of fft_size/2 + 1 values.
  void apply(std::span<const double> power, std::span<double> out) const;

 private:
  Tensor weights_;
  std::vector<double> centers_;
  std::size_t fft_size_;
};

// Hann-windowed frames, power spectrum, mel filters, log(max(floor, .)).
// Throws Errc::too_short when the waveform holds less than one window and
// Errc::config for window < shift or fmax above Nyquist.
MelSpectrogram compute_log_mel(const Waveform& w, const MelConfig& cfg = {});

// Mel binary: "SBML" | version u32 | T u32 | B u32 | frame_shift f64 | f64[T*B].
// Templates use the same layout under the magic "SBTP".
std::vector<std::uint8_t> encode_mel(const MelSpectrogram& mel, const char* magic = "SBML");
MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, const char* magic = "SBML");
void save_mel(const MelSpectrogram& mel, const std::filesystem::path& path);
MelSpectrogram load_mel(const std::filesystem::path& path);

// Mono RIFF/WAVE. Writes 32-bit float; reads 16-bit PCM or 32-bit float.
void save_wav(const Waveform& w, const std::filesystem::path& path);
Waveform load_wav(const std::filesystem::path& path);

}  // namespace segbert::features
