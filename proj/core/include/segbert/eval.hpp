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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segbert/corpus.hpp"
#include "segbert/template.hpp"

namespace segbert::eval {

struct F0Options {
  double fmin = 60.0;
  double fmax = 400.0;
  double window_ms = 50.0;        // same analysis window as the mel front end
  double voicing_threshold = 0.3;  // normalised autocorrelation peak
};

// One estimate per frame (0 = unvoiced), framed like compute_log_mel. Returns
// an empty track when the waveform is shorter than one window.
std::vector<double> estimate_f0(const features::Waveform& w, double frame_shift_ms,
                                const F0Options& options = {});

// Throws Errc::dimension for unequal or short (< 2) inputs and
// Errc::undefined_correlation when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

double mse(std::span<const double> a, std::span<const double> b);

// Per phone: mean over its frames of log(sum(exp(bins))).
std::vector<double> phone_energy(const features::MelSpectrogram& mel,
                                 const features::AlignmentRecord& a);

std::vector<double> phone_durations(const features::AlignmentRecord& a);

// DTW between the two mel sequences, ref as source.
templ::DtwMapping align_tracks(const features::MelSpectrogram& ref,
                               const features::MelSpectrogram& hyp);

struct ProsodyTrack {
  std::vector<double> f0;
  std::vector<double> energy;
  std::vector<double> duration;
};

struct EvalPair {
  std::string id;
  features::MelSpectrogram ref_mel;
  features::AlignmentRecord ref_alignment;
  std::optional<features::Waveform> ref_wave;
  features::MelSpectrogram hyp_mel;
  std::optional<features::AlignmentRecord> hyp_alignment;
  std::optional<features::Waveform> hyp_wave;
};

struct FactorMetrics {
  std::string factor;
  double correlation = 0.0;
  double mse = 0.0;
  std::size_t count = 0;
  std::vector<std::string> flags;
  bool available() const noexcept { return count > 0; }
};

struct MetricsReport {
  FactorMetrics f0{"f0", 0.0, 0.0, 0, {}};
  FactorMetrics energy{"energy", 0.0, 0.0, 0, {}};
  FactorMetrics duration{"duration", 0.0, 0.0, 0, {}};
  std::size_t utterances = 0;
};

struct CompareOptions {
  // Average per-utterance statistics instead of pooling values first.
  bool per_utterance = false;
  F0Options f0;
};

// Paired values for one utterance; factors that cannot be computed are left
// empty and explained in `flags`.
struct PairedTracks {
  ProsodyTrack ref, hyp;
  std::vector<std::string> f0_flags, energy_flags, duration_flags;
};

PairedTracks pair_tracks(const EvalPair& pair, const F0Options& f0 = {});

MetricsReport compare(std::span<const EvalPair> pairs, const CompareOptions& options = {});

// factor,correlation,mse,count,flags
std::string report_csv(const MetricsReport& report);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

// ref_frame,hyp_frame,ref_f0,hyp_f0 along the DTW path, for plotting.
std::string f0_contour_csv(const EvalPair& pair, const F0Options& f0 = {});

}  // namespace segbert::eval
