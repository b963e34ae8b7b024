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

#include "segbert/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"
#include "segbert/parallel.hpp"

namespace segbert::eval {

namespace {

// Normalised autocorrelation of one frame at lag tau.
double nacf(std::span<const double> x, std::size_t tau) {
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t n = 0; n + tau < x.size(); ++n) {
    xy += x[n] * x[n + tau];
    xx += x[n] * x[n];
    yy += x[n + tau] * x[n + tau];
  }
  const double denom = std::sqrt(xx * yy);
  return denom > 0.0 ? xy / denom : 0.0;
}

double frame_f0(std::span<const double> frame, double sample_rate, const F0Options& o) {
  const auto lo = static_cast<std::size_t>(std::floor(sample_rate / o.fmax));
  const auto hi = std::min(frame.size() - 1,
                           static_cast<std::size_t>(std::ceil(sample_rate / o.fmin)));
  if (lo < 1 || lo + 2 > hi) return 0.0;
  std::vector<double> r(hi + 2, 0.0);
  double best = 0.0;
  for (std::size_t tau = lo - 1; tau <= hi + 1 && tau < frame.size(); ++tau) {
    r[tau] = nacf(frame, tau);
    if (tau >= lo && tau <= hi) best = std::max(best, r[tau]);
  }
  if (best < o.voicing_threshold) return 0.0;
  // Earliest lag near the global peak, then climb to its local maximum. This
  // prefers the fundamental over its sub-harmonic multiples.
  std::size_t tau = lo;
  while (r[tau] < 0.9 * best) ++tau;
  while (tau < hi && r[tau + 1] > r[tau]) ++tau;
  double lag = static_cast<double>(tau);
  const double a = r[tau - 1], b = r[tau], c = r[tau + 1];
  const double curvature = a - 2.0 * b + c;
  if (curvature < 0.0) lag += 0.5 * (a - c) / curvature;
  return sample_rate / lag;
}

void add_flag(std::vector<std::string>& flags, const std::string& flag) {
  if (std::find(flags.begin(), flags.end(), flag) == flags.end()) flags.push_back(flag);
}

struct Stats {
  double correlation = 0.0;
  double mse = 0.0;
};

Stats summarize(std::span<const double> ref, std::span<const double> hyp,
                std::vector<std::string>& flags) {
  Stats s;
  s.mse = mse(ref, hyp);
  const bool identical = std::equal(ref.begin(), ref.end(), hyp.begin(), hyp.end());
  try {
    s.correlation = pearson(ref, hyp);
  } catch (const Error& e) {
    if (e.code() != Errc::undefined_correlation && e.code() != Errc::dimension) throw;
    s.correlation = identical ? 1.0 : 0.0;
    add_flag(flags, identical ? "degenerate-identical" : "undefined-correlation");
  }
  return s;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<double> estimate_f0(const features::Waveform& w, double frame_shift_ms,
                                const F0Options& options) {
  require(options.fmin > 0.0 && options.fmax > options.fmin, Errc::config,
          "f0 band must satisfy 0 < fmin < fmax");
  const std::size_t window = features::samples_for_ms(options.window_ms, w.sample_rate);
  const std::size_t shift = features::samples_for_ms(frame_shift_ms, w.sample_rate);
  require(shift >= 1 && window >= 2, Errc::config, "f0 frame shift and window must be positive");
  const std::size_t frames = features::frame_count(w.samples.size(), window, shift);
  std::vector<double> f0(frames, 0.0);
  std::vector<double> buf(window);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto begin = w.samples.begin() + static_cast<std::ptrdiff_t>(t * shift);
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(window), buf.begin());
    double mean = 0.0;
    for (double v : buf) mean += v;
    mean /= static_cast<double>(window);
    for (double& v : buf) v -= mean;
    f0[t] = frame_f0(buf, w.sample_rate, options);
  }
  return f0;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::dimension,
          "pearson length mismatch: " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  require(a.size() >= 2, Errc::dimension, "pearson needs at least two values");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a[k] - ma, db = b[k] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, Errc::undefined_correlation,
          "pearson on a zero-variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mse(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::dimension,
          "mse length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  require(!a.empty(), Errc::empty_input, "mse of empty vectors");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return acc / static_cast<double>(a.size());
}

namespace {

double frame_log_energy(std::span<const double> row) {
  const double peak = *std::max_element(row.begin(), row.end());
  double acc = 0.0;
  for (double v : row) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

}  // namespace

std::vector<double> phone_energy(const features::MelSpectrogram& mel,
                                 const features::AlignmentRecord& a) {
  features::validate_alignment(a, mel.num_frames());
  require(mel.bins() >= 1, Errc::dimension, "phone_energy on a mel without bins");
  std::vector<double> out;
  out.reserve(a.phones.size());
  for (const auto& p : a.phones) {
    double acc = 0.0;
    for (std::uint32_t t = p.start; t < p.end; ++t) acc += frame_log_energy(mel.frames.row(t));
    out.push_back(acc / static_cast<double>(p.frames()));
  }
  return out;
}

std::vector<double> phone_durations(const features::AlignmentRecord& a) {
  std::vector<double> out;
  out.reserve(a.phones.size());
  for (const auto& p : a.phones) out.push_back(static_cast<double>(p.frames()));
  return out;
}

templ::DtwMapping align_tracks(const features::MelSpectrogram& ref,
                               const features::MelSpectrogram& hyp) {
  return templ::dtw_align(ref.frames, hyp.frames).mapping;
}

PairedTracks pair_tracks(const EvalPair& pair, const F0Options& f0) {
  PairedTracks out;
  const bool same_length = pair.ref_mel.num_frames() == pair.hyp_mel.num_frames();
  std::optional<templ::DtwMapping> mapping;
  const auto path = [&]() -> const templ::DtwMapping& {
    if (!mapping) mapping = align_tracks(pair.ref_mel, pair.hyp_mel);
    return *mapping;
  };

  out.ref.energy = phone_energy(pair.ref_mel, pair.ref_alignment);
  if (pair.hyp_alignment) {
    require(pair.hyp_alignment->phones.size() == pair.ref_alignment.phones.size(),
            Errc::dimension, pair.id + ": hyp and ref alignments have different phone counts");
    out.hyp.energy = phone_energy(pair.hyp_mel, *pair.hyp_alignment);
  } else if (same_length) {
    out.hyp.energy = phone_energy(pair.hyp_mel, pair.ref_alignment);
    out.energy_flags.emplace_back("ref-alignment-reused");
  } else {
    // Each ref phone takes the hyp frames DTW pairs with its frames.
    std::vector<std::size_t> phone_of(pair.ref_mel.num_frames());
    for (std::size_t p = 0; p < pair.ref_alignment.phones.size(); ++p)
      for (auto t = pair.ref_alignment.phones[p].start; t < pair.ref_alignment.phones[p].end; ++t)
        phone_of[t] = p;
    std::vector<double> sum(pair.ref_alignment.phones.size(), 0.0);
    std::vector<std::size_t> count(sum.size(), 0);
    for (const auto& [i, j] : path().path) {
      sum[phone_of[i]] += frame_log_energy(pair.hyp_mel.frames.row(j));
      ++count[phone_of[i]];
    }
    for (std::size_t p = 0; p < sum.size(); ++p)
      out.hyp.energy.push_back(sum[p] / static_cast<double>(count[p]));
    out.energy_flags.emplace_back("dtw-projected");
  }

  if (pair.hyp_alignment) {
    out.ref.duration = phone_durations(pair.ref_alignment);
    out.hyp.duration = phone_durations(*pair.hyp_alignment);
  } else if (same_length) {
    out.ref.duration = phone_durations(pair.ref_alignment);
    out.hyp.duration = out.ref.duration;
    out.duration_flags.emplace_back("ref-alignment-reused");
  } else {
    out.duration_flags.emplace_back("skipped-no-hyp-alignment");
  }

  if (pair.ref_wave && pair.hyp_wave) {
    const auto ref_f0 = estimate_f0(*pair.ref_wave, pair.ref_mel.frame_shift_ms, f0);
    const auto hyp_f0 = estimate_f0(*pair.hyp_wave, pair.hyp_mel.frame_shift_ms, f0);
    for (const auto& [i, j] : path().path) {
      if (i >= ref_f0.size() || j >= hyp_f0.size()) continue;
      if (ref_f0[i] <= 0.0 || hyp_f0[j] <= 0.0) continue;
      out.ref.f0.push_back(ref_f0[i]);
      out.hyp.f0.push_back(hyp_f0[j]);
    }
  } else {
    out.f0_flags.emplace_back("skipped-no-waveform");
  }
  return out;
}

MetricsReport compare(std::span<const EvalPair> pairs, const CompareOptions& options) {
  require(!pairs.empty(), Errc::empty_input, "compare needs at least one pair");
  std::vector<PairedTracks> tracks(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) { tracks[k] = pair_tracks(pairs[k], options.f0); });

  MetricsReport report;
  report.utterances = pairs.size();
  using Member = std::vector<double> ProsodyTrack::*;
  using FlagMember = std::vector<std::string> PairedTracks::*;
  const auto fill = [&](FactorMetrics& m, Member values, FlagMember pair_flags) {
    for (const auto& t : tracks)
      for (const auto& f : t.*pair_flags) add_flag(m.flags, f);
    if (options.per_utterance) {
      std::size_t used = 0;
      for (const auto& t : tracks) {
        const auto& ref = t.ref.*values;
        if (ref.empty()) continue;
        const Stats s = summarize(ref, t.hyp.*values, m.flags);
        m.correlation += s.correlation;
        m.mse += s.mse;
        m.count += ref.size();
        ++used;
      }
      if (used > 0) {
        m.correlation /= static_cast<double>(used);
        m.mse /= static_cast<double>(used);
        add_flag(m.flags, "per-utterance-mean");
      }
    } else {
      std::vector<double> ref, hyp;
      for (const auto& t : tracks) {
        ref.insert(ref.end(), (t.ref.*values).begin(), (t.ref.*values).end());
        hyp.insert(hyp.end(), (t.hyp.*values).begin(), (t.hyp.*values).end());
      }
      if (!ref.empty()) {
        const Stats s = summarize(ref, hyp, m.flags);
        m.correlation = s.correlation;
        m.mse = s.mse;
        m.count = ref.size();
      }
    }
    if (m.count == 0) add_flag(m.flags, "unavailable");
    require(std::isfinite(m.correlation) && std::isfinite(m.mse), Errc::state,
            m.factor + " metrics are not finite");
  };
  fill(report.f0, &ProsodyTrack::f0, &PairedTracks::f0_flags);
  fill(report.energy, &ProsodyTrack::energy, &PairedTracks::energy_flags);
  fill(report.duration, &ProsodyTrack::duration, &PairedTracks::duration_flags);
  add_flag(report.f0.flags, "unit=Hz^2");
  return report;
}

std::string report_csv(const MetricsReport& report) {
  std::string out = "factor,correlation,mse,count,flags\n";
  for (const FactorMetrics* m : {&report.f0, &report.energy, &report.duration}) {
    std::string flags;
    for (const auto& f : m->flags) flags += (flags.empty() ? "" : ";") + f;
    out += m->factor + "," + format_double(m->correlation) + "," + format_double(m->mse) + "," +
           std::to_string(m->count) + "," + flags + "\n";
  }
  return out;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  io::write_text(path, report_csv(report));
}

std::string f0_contour_csv(const EvalPair& pair, const F0Options& f0) {
  require(pair.ref_wave && pair.hyp_wave, Errc::state,
          pair.id + ": f0 contours need both waveforms");
  const auto ref_f0 = estimate_f0(*pair.ref_wave, pair.ref_mel.frame_shift_ms, f0);
  const auto hyp_f0 = estimate_f0(*pair.hyp_wave, pair.hyp_mel.frame_shift_ms, f0);
  std::string out = "ref_frame,hyp_frame,ref_f0,hyp_f0\n";
  for (const auto& [i, j] : align_tracks(pair.ref_mel, pair.hyp_mel).path) {
    const double r = i < ref_f0.size() ? ref_f0[i] : 0.0;
    const double h = j < hyp_f0.size() ? hyp_f0[j] : 0.0;
    out += std::to_string(i) + "," + std::to_string(j) + "," + format_double(r) + "," +
           format_double(h) + "\n";
  }
  return out;
}

}  // namespace segbert::eval
