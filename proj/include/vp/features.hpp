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

#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vp/audio.hpp"
#include "vp/dsp.hpp"
#include "vp/error.hpp"
#include "vp/matrix.hpp"

namespace vp {

/// Front-end configuration. The fingerprint travels with every feature
/// matrix and model file; models refuse features produced under a different
/// configuration.
struct FeatureConfig {
  int sample_rate = 16000;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  Window window = Window::hamming;
  double pre_emphasis = 0.97;
  int n_mels = 26;
  int n_mfcc = 13;      // c1..c13, c0 excluded
  int lpc_order = 12;
  int n_lpc_ceps = 12;
  // Off by default: per-utterance mean normalization erases the stationary
  // envelope cues a GMM-UBM identifier keys on. Enable for channel-variable
  // field data.
  bool cmvn = false;

  std::string fingerprint() const {
    std::ostringstream os;
    os << "vpfeat1;sr=" << sample_rate << ";frame=" << frame_ms << ";hop=" << hop_ms
       << ";win=" << window_name(window) << ";pe=" << pre_emphasis << ";mel=" << n_mels
       << ";mfcc=" << n_mfcc << ";lpc=" << lpc_order << ";lcep=" << n_lpc_ceps
       << ";cmvn=" << (cmvn ? 1 : 0);
    return os.str();
  }
};

/// Per-frame feature vectors plus the fingerprint of the configuration that
/// produced them.
struct FeatureMatrix {
  Matrix vectors;  // num_frames x dim
  std::string meta;

  std::size_t num_frames() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
};

/// All-pole spectral envelope of one frame: predictor a[1..p] for the
/// synthesis filter 1/(1 - sum a_k z^-k), plus the prediction-error gain.
struct LpcEnvelope {
  std::vector<double> coeffs;  // a[1..order]
  double gain = 0.0;
  int order = 0;
};

namespace detail {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filterbank weights, n_mels x (nfft/2 + 1), spanning
/// 0..sample_rate/2.
inline Matrix mel_filterbank(int n_mels, std::size_t nfft, int sample_rate) {
  const std::size_t bins = nfft / 2 + 1;
  Matrix fb(static_cast<std::size_t>(n_mels), bins, 0.0);
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = mel_to_hz(mel_max * static_cast<double>(m) / static_cast<double>(n_mels + 1));
  }
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
      double w = 0.0;
      if (f > lo && f < mid) {
        w = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(static_cast<std::size_t>(m), k) = w;
    }
  }
  return fb;
}

constexpr double kLogEnergyFloor = 1e-10;

}  // namespace detail

/// MFCC per frame: magnitude spectrum -> triangular mel filterbank ->
/// floored log energies -> DCT-II keeping coefficients 1..n_coeffs.
inline FeatureMatrix mfcc(const FrameSequence& frames, int n_mels, int n_coeffs,
                          int sample_rate) {
  if (n_mels < 1 || n_coeffs < 1 || n_coeffs > n_mels) {
    throw Error(ErrorCode::ConfigInvalid, "need 1 <= n_coeffs <= n_mels");
  }
  if (sample_rate <= 0) throw Error(ErrorCode::ConfigInvalid, "sample_rate must be > 0");

  const std::size_t nfft = detail::next_pow2(static_cast<std::size_t>(frames.frame_len));
  const Matrix fb = detail::mel_filterbank(n_mels, nfft, sample_rate);
  const std::size_t bins = nfft / 2 + 1;

  FeatureMatrix out;
  out.vectors = Matrix(frames.num_frames(), static_cast<std::size_t>(n_coeffs));
  std::ostringstream meta;
  meta << "mfcc;fl=" << frames.frame_len << ";hop=" << frames.hop << ";sr=" << sample_rate
       << ";mel=" << n_mels << ";n=" << n_coeffs;
  out.meta = meta.str();

  std::vector<double> logmel(static_cast<std::size_t>(n_mels));
  for (std::size_t f = 0; f < frames.num_frames(); ++f) {
    const std::vector<double> mag =
        detail::magnitude_spectrum(frames.frames.row(f), static_cast<std::size_t>(frames.frame_len), nfft);
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      const double* w = fb.row(static_cast<std::size_t>(m));
      for (std::size_t k = 0; k < bins; ++k) e += w[k] * mag[k];
      logmel[static_cast<std::size_t>(m)] = std::log(std::max(e, detail::kLogEnergyFloor));
    }
    double* row = out.vectors.row(f);
    for (int k = 1; k <= n_coeffs; ++k) {
      double c = 0.0;
      for (int m = 0; m < n_mels; ++m) {
        c += logmel[static_cast<std::size_t>(m)] *
             std::cos(std::numbers::pi * k * (m + 0.5) / n_mels);
      }
      row[k - 1] = c;
    }
  }
  return out;
}

/// Per-frame autocorrelation LPC via Levinson-Durbin. Zero-energy frames
/// yield zero coefficients and gain 0.
inline std::vector<LpcEnvelope> lpc(const FrameSequence& frames, int order) {
  if (order < 1 || order >= frames.frame_len) {
    throw Error(ErrorCode::ConfigInvalid, "need 1 <= order < frame_len");
  }
  std::vector<LpcEnvelope> out;
  out.reserve(frames.num_frames());
  for (std::size_t f = 0; f < frames.num_frames(); ++f) {
    const std::vector<double> r = detail::autocorrelation(
        frames.frames.row(f), static_cast<std::size_t>(frames.frame_len),
        static_cast<std::size_t>(order));
    LpcEnvelope env;
    env.order = order;
    if (r[0] <= 0.0) {
      env.coeffs.assign(static_cast<std::size_t>(order), 0.0);
      env.gain = 0.0;
    } else {
      env.coeffs = detail::levinson(r, order, &env.gain);
    }
    out.push_back(std::move(env));
  }
  return out;
}

/// LPC-to-cepstrum recursion, c[1..n_ceps]. Valid for n_ceps beyond the
/// predictor order (the tail uses cepstral history only).
inline std::vector<double> lpc_to_cepstrum(const LpcEnvelope& env, int n_ceps) {
  if (n_ceps < 1) throw Error(ErrorCode::ConfigInvalid, "n_ceps must be >= 1");
  const int p = env.order;
  auto a = [&](int k) -> double {
    return (k >= 1 && k <= p) ? env.coeffs[static_cast<std::size_t>(k - 1)] : 0.0;
  };
  std::vector<double> c(static_cast<std::size_t>(n_ceps) + 1, 0.0);  // c[0] unused
  for (int n = 1; n <= n_ceps; ++n) {
    double acc = a(n);
    for (int k = 1; k < n; ++k) {
      acc += (static_cast<double>(k) / n) * c[static_cast<std::size_t>(k)] * a(n - k);
    }
    c[static_cast<std::size_t>(n)] = acc;
  }
  return {c.begin() + 1, c.end()};
}

/// Bandwidth expansion: scales predictor pole radii by gamma (a_k *= gamma^k),
/// pushing poles inward to guarantee a stability margin at synthesis.
inline LpcEnvelope expand_bandwidth(const LpcEnvelope& env, double gamma) {
  LpcEnvelope out = env;
  double g = gamma;
  for (double& c : out.coeffs) {
    c *= g;
    g *= gamma;
  }
  return out;
}

/// Row-wise concatenation of two per-frame feature sets, optionally followed
/// by per-utterance mean/variance normalization (zero-variance dims go to 0).
inline FeatureMatrix stack_features(const FeatureMatrix& a, const FeatureMatrix& b, bool cmvn) {
  if (a.num_frames() != b.num_frames()) {
    throw Error(ErrorCode::FrameCountMismatch,
                std::to_string(a.num_frames()) + " vs " + std::to_string(b.num_frames()) +
                    " frames");
  }
  auto geometry = [](const std::string& meta) {
    const auto sep = meta.find(';');
    return sep == std::string::npos ? meta : meta.substr(sep + 1);
  };
  if (!a.meta.empty() && !b.meta.empty()) {
    const std::string ga = geometry(a.meta), gb = geometry(b.meta);
    // geometry prefix "fl=..;hop=..;sr=.." must agree before stacking
    const auto cut = [](const std::string& g) {
      std::size_t semis = 0, i = 0;
      for (; i < g.size() && semis < 3; ++i) {
        if (g[i] == ';') ++semis;
      }
      return g.substr(0, i);
    };
    if (cut(ga) != cut(gb)) {
      throw Error(ErrorCode::FingerprintMismatch, "cannot stack '" + a.meta + "' with '" + b.meta + "'");
    }
  }

  FeatureMatrix out;
  out.vectors = Matrix(a.num_frames(), a.dim() + b.dim());
  for (std::size_t f = 0; f < a.num_frames(); ++f) {
    double* row = out.vectors.row(f);
    const double* ra = a.vectors.row(f);
    const double* rb = b.vectors.row(f);
    for (std::size_t d = 0; d < a.dim(); ++d) row[d] = ra[d];
    for (std::size_t d = 0; d < b.dim(); ++d) row[a.dim() + d] = rb[d];
  }
  out.meta = "stack(" + a.meta + "+" + b.meta + ");cmvn=" + (cmvn ? "1" : "0");

  if (cmvn && out.num_frames() > 0) {
    const std::size_t n = out.num_frames(), dim = out.dim();
    for (std::size_t d = 0; d < dim; ++d) {
      double mean = 0.0;
      for (std::size_t f = 0; f < n; ++f) mean += out.vectors(f, d);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t f = 0; f < n; ++f) {
        const double dev = out.vectors(f, d) - mean;
        var += dev * dev;
      }
      var /= static_cast<double>(n);
      if (var <= 0.0) {
        for (std::size_t f = 0; f < n; ++f) out.vectors(f, d) = 0.0;
      } else {
        const double inv_std = 1.0 / std::sqrt(var);
        for (std::size_t f = 0; f < n; ++f) {
          out.vectors(f, d) = (out.vectors(f, d) - mean) * inv_std;
        }
      }
    }
  }
  return out;
}

/// Full front-end: pre-emphasis -> framing -> MFCC + LPC-cepstra -> stack.
/// The result carries the canonical config fingerprint expected by models.
inline FeatureMatrix extract_features(const AudioClip& clip, const FeatureConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw Error(ErrorCode::SampleRateMismatch,
                "clip '" + clip.id + "' is " + std::to_string(clip.sample_rate) +
                    " Hz, pipeline expects " + std::to_string(cfg.sample_rate) + " Hz");
  }
  const AudioClip emphasized = pre_emphasize(clip, cfg.pre_emphasis);
  const FrameSequence frames = frame(emphasized, cfg.frame_ms, cfg.hop_ms, cfg.window);

  FeatureMatrix mf = mfcc(frames, cfg.n_mels, cfg.n_mfcc, cfg.sample_rate);

  const std::vector<LpcEnvelope> envs = lpc(frames, cfg.lpc_order);
  FeatureMatrix lc;
  lc.vectors = Matrix(envs.size(), static_cast<std::size_t>(cfg.n_lpc_ceps));
  lc.meta = mf.meta;  // same geometry by construction
  for (std::size_t f = 0; f < envs.size(); ++f) {
    const std::vector<double> ceps = lpc_to_cepstrum(envs[f], cfg.n_lpc_ceps);
    double* row = lc.vectors.row(f);
    for (int d = 0; d < cfg.n_lpc_ceps; ++d) row[static_cast<std::size_t>(d)] = ceps[static_cast<std::size_t>(d)];
  }

  FeatureMatrix stacked = stack_features(mf, lc, cfg.cmvn);
  stacked.meta = cfg.fingerprint();
  return stacked;
}

/// Frame-wise concatenation across utterances (training pools). All parts
/// must carry the same fingerprint.
inline FeatureMatrix concat_features(const std::vector<FeatureMatrix>& parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptyList, "nothing to concatenate");
  const std::string& meta = parts.front().meta;
  const std::size_t dim = parts.front().dim();
  std::size_t total = 0;
  for (const FeatureMatrix& p : parts) {
    if (p.meta != meta) {
      throw Error(ErrorCode::FingerprintMismatch,
                  "cannot pool '" + p.meta + "' with '" + meta + "'");
    }
    total += p.num_frames();
  }
  FeatureMatrix out;
  out.meta = meta;
  out.vectors = Matrix(total, dim);
  std::size_t at = 0;
  for (const FeatureMatrix& p : parts) {
    std::copy(p.vectors.data().begin(), p.vectors.data().end(),
              out.vectors.data().begin() + static_cast<std::ptrdiff_t>(at * dim));
    at += p.num_frames();
  }
  return out;
}

}  // namespace vp
