// Copyright 2026 The voiceprivacy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vp/audio.hpp"
#include "vp/dsp.hpp"
#include "vp/error.hpp"
#include "vp/features.hpp"

namespace vp {

struct PitchConfig {
  double min_f0 = 60.0;
  double max_f0 = 400.0;
  double window_ms = 20.0;         // correlation window
  double hop_ms = 5.0;
  double voicing_threshold = 0.55; // peak NCCF below this marks the frame unvoiced
  double octave_tolerance = 0.95;  // shortest lag scoring within this factor wins
};

struct PitchTrack {
  std::vector<double> f0;        // Hz per frame, 0 when unvoiced
  std::vector<double> strength;  // winning NCCF per frame
  std::size_t hop = 0;           // samples between frames
  int sample_rate = 0;

  std::size_t num_frames() const { return f0.size(); }

  double f0_at_sample(std::size_t n) const {
    if (f0.empty()) return 0.0;
    const std::size_t idx = std::min(n / hop, f0.size() - 1);
    return f0[idx];
  }

  double voiced_fraction() const {
    if (f0.empty()) return 0.0;
    std::size_t v = 0;
    for (double x : f0) v += x > 0.0 ? 1 : 0;
    return static_cast<double>(v) / static_cast<double>(f0.size());
  }

  double voiced_mean_log_f0() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : f0) {
      if (x > 0.0) {
        sum += std::log(x);
        ++n;
      }
    }
    if (n == 0) throw Error(ErrorCode::InsufficientVoicedData, "no voiced frames");
    return sum / static_cast<double>(n);
  }
};

/// Normalized cross-correlation F0 tracker. Candidate lags span
/// [sr/max_f0, sr/min_f0]; among local maxima scoring within
/// `octave_tolerance` of the global best the shortest lag wins, which guards
/// against subharmonic (octave-down) errors. The winning lag is refined by
/// parabolic interpolation.
inline PitchTrack track_f0(const AudioClip& clip, const PitchConfig& cfg = {}) {
  if (cfg.min_f0 <= 0.0 || cfg.max_f0 <= cfg.min_f0) {
    throw Error(ErrorCode::ConfigInvalid, "bad F0 range");
  }
  const int sr = clip.sample_rate;
  const std::size_t w =
      static_cast<std::size_t>(std::lround(cfg.window_ms * sr / 1000.0));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(cfg.hop_ms * sr / 1000.0));
  const std::size_t min_lag = static_cast<std::size_t>(std::floor(sr / cfg.max_f0));
  const std::size_t max_lag = static_cast<std::size_t>(std::ceil(sr / cfg.min_f0));
  if (w == 0 || hop == 0 || min_lag < 2) {
    throw Error(ErrorCode::ConfigInvalid, "pitch window too short for range");
  }

  PitchTrack track;
  track.hop = hop;
  track.sample_rate = sr;
  const std::size_t need = w + max_lag + 1;
  const std::size_t n = clip.samples.size();
  if (n < need) return track;  // zero frames, caller decides how to react
  const std::size_t frames = (n - need) / hop + 1;

  std::vector<double> x(need);
  std::vector<double> ncf(max_lag + 2, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* src = clip.samples.data() + f * hop;
    double mean = 0.0;
    for (std::size_t i = 0; i < need; ++i) mean += src[i];
    mean /= static_cast<double>(need);
    for (std::size_t i = 0; i < need; ++i) x[i] = src[i] - mean;

    std::vector<double> cum(need + 1, 0.0);
    for (std::size_t i = 0; i < need; ++i) cum[i + 1] = cum[i] + x[i] * x[i];
    const double e0 = cum[w] - cum[0];

    double best = 0.0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      double dot = 0.0;
      for (std::size_t i = 0; i < w; ++i) dot += x[i] * x[i + lag];
      const double et = cum[lag + w] - cum[lag];
      ncf[lag] = dot / std::sqrt(e0 * et + 1e-12);
      best = std::max(best, ncf[lag]);
    }

    std::size_t lag = 0;
    for (std::size_t cand = min_lag; cand <= max_lag; ++cand) {
      const bool local_max = ncf[cand] >= (cand > min_lag ? ncf[cand - 1] : -2.0) &&
                             ncf[cand] >= (cand < max_lag ? ncf[cand + 1] : -2.0);
      if (local_max && ncf[cand] >= cfg.octave_tolerance * best) {
        lag = cand;
        break;
      }
    }

    if (lag == 0 || ncf[lag] < cfg.voicing_threshold) {
      track.f0.push_back(0.0);
      track.strength.push_back(lag == 0 ? 0.0 : ncf[lag]);
      continue;
    }

    double refined = static_cast<double>(lag);
    if (lag > min_lag && lag < max_lag) {
      const double a = ncf[lag - 1], b = ncf[lag], c = ncf[lag + 1];
      const double denom = a - 2.0 * b + c;
      if (std::abs(denom) > 1e-12) {
        const double delta = 0.5 * (a - c) / denom;
        if (std::abs(delta) <= 1.0) refined += delta;
      }
    }
    const double f0 = sr / refined;
    if (f0 < cfg.min_f0 || f0 > cfg.max_f0) {
      track.f0.push_back(0.0);
    } else {
      track.f0.push_back(f0);
    }
    track.strength.push_back(ncf[lag]);
  }

  // 3-point median post-filter. Frames whose window straddles a word
  // boundary can latch onto a spurious short lag; an isolated outlier (or
  // an isolated dropout) between two agreeing neighbours is replaced by the
  // neighbourhood median. Steady-state frames pass through unchanged.
  if (track.f0.size() >= 3) {
    std::vector<double> smoothed(track.f0);
    for (std::size_t i = 1; i + 1 < track.f0.size(); ++i) {
      double a = track.f0[i - 1], b = track.f0[i], c = track.f0[i + 1];
      if (a > c) std::swap(a, c);
      if (a > b) std::swap(a, b);
      if (b > c) std::swap(b, c);
      smoothed[i] = b;
    }
    track.f0 = std::move(smoothed);
  }
  return track;
}

struct AnalysisConfig {
  int lpc_order = 18;
  double frame_ms = 25.0;
  double hop_ms = 5.0;
  PitchConfig pitch;  // pitch.hop_ms is overridden to hop_ms during analyze()

  std::string fingerprint() const {
    return "vpsf1;order=" + std::to_string(lpc_order) +
           ";frame=" + std::to_string(frame_ms) + ";hop=" + std::to_string(hop_ms);
  }
};

/// Excitation plus per-frame spectral envelopes; together they reconstruct
/// the input exactly when the envelopes are left untouched.
struct SourceFilterDecomp {
  std::vector<float> residual;         // inverse-filtered excitation, input length
  std::vector<LpcEnvelope> envelopes;  // one per analysis frame
  PitchTrack pitch;
  int sample_rate = 0;
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::string id;

  std::size_t num_frames() const { return envelopes.size(); }
  // sample n is filtered with the coefficients of this frame
  std::size_t owner_frame(std::size_t n) const {
    return std::min(n / hop, envelopes.size() - 1);
  }
};

/// LPC analysis: Hamming-windowed autocorrelation per frame, then inverse
/// filtering e[n] = x[n] - sum_k a_k x[n-k] with each sample owned by one
/// frame, so synthesis with the same coefficients is an exact inverse.
inline SourceFilterDecomp analyze(const AudioClip& clip, const AnalysisConfig& cfg = {}) {
  if (cfg.lpc_order < 1) throw Error(ErrorCode::ConfigInvalid, "lpc_order must be >= 1");
  const int sr = clip.sample_rate;
  const std::size_t frame_len =
      static_cast<std::size_t>(std::lround(cfg.frame_ms * sr / 1000.0));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(cfg.hop_ms * sr / 1000.0));
  const std::size_t n = clip.samples.size();
  if (frame_len == 0 || hop == 0 || frame_len <= static_cast<std::size_t>(cfg.lpc_order)) {
    throw Error(ErrorCode::ConfigInvalid, "frame too short for LPC order");
  }
  if (n < frame_len) {
    throw Error(ErrorCode::TooFewFrames, "clip shorter than one analysis frame");
  }

  SourceFilterDecomp d;
  d.sample_rate = sr;
  d.frame_len = frame_len;
  d.hop = hop;
  d.id = clip.id;

  const std::size_t frames = (n - frame_len) / hop + 1;
  const int p = cfg.lpc_order;
  std::vector<double> windowed(frame_len);
  std::vector<double> r(p + 1);
  d.envelopes.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* src = clip.samples.data() + f * hop;
    for (std::size_t i = 0; i < frame_len; ++i) {
      windowed[i] = src[i] * detail::hamming(i, frame_len);
    }
    r = detail::autocorrelation(windowed.data(), frame_len, p);
    LpcEnvelope env;
    env.order = p;
    if (r[0] <= 1e-12) {
      env.coeffs.assign(p, 0.0);
      env.gain = 0.0;
    } else {
      double err = 0.0;
      env.coeffs = detail::levinson(r, p, &err);
      env.gain = std::sqrt(std::max(err, 0.0));
    }
    d.envelopes.push_back(std::move(env));
  }

  d.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LpcEnvelope& env = d.envelopes[d.owner_frame(i)];
    double e = clip.samples[i];
    const std::size_t taps = std::min<std::size_t>(p, i);
    for (std::size_t k = 1; k <= taps; ++k) {
      e -= env.coeffs[k - 1] * static_cast<double>(clip.samples[i - k]);
    }
    d.residual[i] = static_cast<float>(e);
  }

  PitchConfig pc = cfg.pitch;
  pc.hop_ms = cfg.hop_ms;
  d.pitch = track_f0(clip, pc);
  return d;
}

/// All-pole synthesis y[n] = e[n] + sum_k a_k y[n-k], mirroring analyze().
/// Every envelope must be a stable predictor or the recursion diverges.
inline AudioClip synthesize(const SourceFilterDecomp& d) {
  if (d.envelopes.empty()) throw Error(ErrorCode::TooFewFrames, "nothing to synthesize");
  for (std::size_t f = 0; f < d.envelopes.size(); ++f) {
    if (d.envelopes[f].gain > 0.0 && !detail::is_stable_predictor(d.envelopes[f].coeffs)) {
      throw Error(ErrorCode::UnstableEnvelope,
                  "unstable envelope at frame " + std::to_string(f));
    }
  }
  AudioClip out;
  out.sample_rate = d.sample_rate;
  out.id = d.id;
  const std::size_t n = d.residual.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const LpcEnvelope& env = d.envelopes[d.owner_frame(i)];
    double v = d.residual[i];
    const std::size_t taps = std::min<std::size_t>(env.order, i);
    for (std::size_t k = 1; k <= taps; ++k) {
      v += env.coeffs[k - 1] * y[i - k];
    }
    y[i] = v;
  }
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(std::clamp(y[i], -4.0, 4.0));
  }
  return out;
}

/// Glottal-pulse epoch marks: within each voiced run the residual magnitude
/// peak of every period window becomes an epoch, chained one period at a
/// time.
inline std::vector<std::size_t> detect_epochs(const SourceFilterDecomp& d) {
  std::vector<std::size_t> epochs;
  const std::size_t n = d.residual.size();
  if (n == 0 || d.pitch.num_frames() == 0) return epochs;

  auto period_at = [&](std::size_t pos) -> double {
    const double f0 = d.pitch.f0_at_sample(pos);
    return f0 > 0.0 ? d.sample_rate / f0 : 0.0;
  };

  std::size_t pos = 0;
  while (pos < n) {
    if (d.pitch.f0_at_sample(pos) <= 0.0) {
      pos += d.pitch.hop;
      continue;
    }
    // voiced run [seg_begin, seg_end)
    std::size_t seg_begin = pos;
    std::size_t seg_end = pos;
    while (seg_end < n && d.pitch.f0_at_sample(seg_end) > 0.0) seg_end += d.pitch.hop;
    seg_end = std::min(seg_end, n);

    double period = period_at(seg_begin);
    std::size_t win_end = std::min(seg_begin + static_cast<std::size_t>(period), seg_end);
    std::size_t e = seg_begin;
    for (std::size_t i = seg_begin; i < win_end; ++i) {
      if (std::abs(d.residual[i]) > std::abs(d.residual[e])) e = i;
    }
    epochs.push_back(e);
    while (true) {
      period = period_at(epochs.back());
      if (period <= 0.0) break;
      const std::size_t lo =
          epochs.back() + static_cast<std::size_t>(std::lround(0.7 * period));
      const std::size_t hi =
          epochs.back() + static_cast<std::size_t>(std::lround(1.3 * period));
      if (lo >= seg_end) break;
      const std::size_t stop = std::min(hi, seg_end);
      std::size_t next = lo;
      for (std::size_t i = lo; i < stop; ++i) {
        if (std::abs(d.residual[i]) > std::abs(d.residual[next])) next = i;
      }
      epochs.push_back(next);
    }
    pos = seg_end;
  }
  return epochs;
}

}  // namespace vp
