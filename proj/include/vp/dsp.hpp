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
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "vp/error.hpp"

namespace vp::detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey. Power-of-two sizes only; frame
// lengths are zero-padded to a power of two before they reach here.
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0) return;
  if (!is_pow2(n)) throw Error(ErrorCode::ConfigInvalid, "fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

/// Magnitude spectrum of a real frame, bins 0..nfft/2. The frame is
/// zero-padded (or truncated is an error) to nfft.
inline std::vector<double> magnitude_spectrum(const double* frame, std::size_t len,
                                              std::size_t nfft) {
  if (len > nfft) throw Error(ErrorCode::ConfigInvalid, "frame longer than fft size");
  std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
  for (std::size_t i = 0; i < len; ++i) buf[i] = {frame[i], 0.0};
  fft(buf);
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t k = 0; k <= nfft / 2; ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

/// Biased autocorrelation r[0..max_lag] of one frame.
inline std::vector<double> autocorrelation(const double* x, std::size_t len,
                                           std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t j = 0; j <= max_lag && j < len; ++j) {
    double acc = 0.0;
    for (std::size_t n = j; n < len; ++n) acc += x[n] * x[n - j];
    r[j] = acc;
  }
  return r;
}

// Levinson-Durbin. Solves the Toeplitz normal equations for the predictor
// x[n] ~ sum_k a[k] x[n-k]; returns prediction coefficients and leaves the
// final prediction error in *error_out. Reflection coefficients all have
// |k| < 1 for positive-definite input, which makes 1/(1 - sum a_k z^-k)
// stable. A tiny ridge on r[0] guards near-singular autocorrelations.
inline std::vector<double> levinson(const std::vector<double>& r_in, int order,
                                    double* error_out = nullptr) {
  if (order < 1 || r_in.size() < static_cast<std::size_t>(order) + 1) {
    throw Error(ErrorCode::ConfigInvalid, "levinson: need r[0..order]");
  }
  std::vector<double> a(static_cast<std::size_t>(order), 0.0);
  if (r_in[0] <= 0.0) {
    if (error_out) *error_out = 0.0;
    return a;
  }
  std::vector<double> r = r_in;
  r[0] *= 1.0 + 1e-9;
  double err = r[0];
  std::vector<double> prev(static_cast<std::size_t>(order), 0.0);
  for (int i = 1; i <= order; ++i) {
    double acc = r[static_cast<std::size_t>(i)];
    for (int j = 1; j < i; ++j) {
      acc -= a[static_cast<std::size_t>(j - 1)] * r[static_cast<std::size_t>(i - j)];
    }
    double k = acc / err;
    if (k > 0.999999) k = 0.999999;
    if (k < -0.999999) k = -0.999999;
    std::copy(a.begin(), a.begin() + (i - 1), prev.begin());
    a[static_cast<std::size_t>(i - 1)] = k;
    for (int j = 1; j < i; ++j) {
      a[static_cast<std::size_t>(j - 1)] =
          prev[static_cast<std::size_t>(j - 1)] - k * prev[static_cast<std::size_t>(i - j - 1)];
    }
    err *= (1.0 - k * k);
    if (err <= 0.0) {
      err = 0.0;
      break;
    }
  }
  if (error_out) *error_out = err;
  return a;
}

/// Reflection coefficients of a predictor (step-down recursion). Used as a
/// stability check: all |k| < 1 iff 1/(1 - sum a_k z^-k) is stable.
inline std::vector<double> reflection_coefficients(const std::vector<double>& a_in) {
  std::vector<double> a = a_in;
  const int p = static_cast<int>(a.size());
  std::vector<double> ks(static_cast<std::size_t>(p), 0.0);
  for (int i = p; i >= 1; --i) {
    const double k = a[static_cast<std::size_t>(i - 1)];
    ks[static_cast<std::size_t>(i - 1)] = k;
    const double denom = 1.0 - k * k;
    if (denom == 0.0) {
      // |k| == 1: already unstable; report and stop.
      for (int j = 0; j < i - 1; ++j) ks[static_cast<std::size_t>(j)] = 1.0;
      break;
    }
    std::vector<double> b(a.begin(), a.begin() + (i - 1));
    for (int j = 1; j < i; ++j) {
      a[static_cast<std::size_t>(j - 1)] =
          (b[static_cast<std::size_t>(j - 1)] + k * b[static_cast<std::size_t>(i - j - 1)]) / denom;
    }
  }
  return ks;
}

inline bool is_stable_predictor(const std::vector<double>& a) {
  for (double k : reflection_coefficients(a)) {
    if (!(std::abs(k) < 1.0)) return false;
  }
  return true;
}

/// Hamming window value, w[i] for a window of length n.
inline double hamming(std::size_t i, std::size_t n) {
  if (n <= 1) return 1.0;
  return 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
}

/// Hann window value (used by pitch-synchronous overlap-add).
inline double hann(std::size_t i, std::size_t n) {
  if (n <= 1) return 1.0;
  return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                              static_cast<double>(n - 1));
}

}  // namespace vp::detail
