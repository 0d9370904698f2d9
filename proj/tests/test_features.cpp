// Copyright 2026 The voiceprivacy Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"
#include "vp/features.hpp"

using Catch::Matchers::WithinAbs;

namespace {

// O(N^2) reference DFT, deliberately independent of the library FFT.
std::vector<double> naive_magnitude(const std::vector<double>& x, std::size_t nfft) {
  std::vector<double> mags(nfft / 2 + 1);
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double ang = -2.0 * std::numbers::pi * double(k) * double(n) / double(nfft);
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    mags[k] = std::abs(acc);
  }
  return mags;
}

vp::FrameSequence one_frame(const std::vector<double>& x) {
  vp::FrameSequence seq;
  seq.frame_len = static_cast<int>(x.size());
  seq.hop = static_cast<int>(x.size());
  seq.window = vp::Window::rectangular;
  seq.frames = vp::Matrix(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) seq.frames(0, i) = x[i];
  return seq;
}

}  // namespace

TEST_CASE("magnitude spectrum matches a naive DFT") {
  vptest::GaussRng g(7);
  std::vector<double> x(60);
  for (double& v : x) v = g.next();

  const std::size_t nfft = 64;
  const std::vector<double> got = vp::detail::magnitude_spectrum(x.data(), x.size(), nfft);
  const std::vector<double> want = naive_magnitude(x, nfft);

  REQUIRE(got.size() == want.size());
  for (std::size_t k = 0; k < want.size(); ++k) {
    CHECK_THAT(got[k], WithinAbs(want[k], 1e-9));
  }
}

TEST_CASE("mel scale anchors and inverse") {
  // 1000 Hz sits at ~1000 mel by construction of the 2595/700 form.
  CHECK_THAT(vp::detail::hz_to_mel(1000.0), WithinAbs(1000.0, 0.05));
  CHECK_THAT(vp::detail::hz_to_mel(0.0), WithinAbs(0.0, 1e-12));
  for (double hz : {80.0, 440.0, 3200.0, 7999.0}) {
    CHECK_THAT(vp::detail::mel_to_hz(vp::detail::hz_to_mel(hz)), WithinAbs(hz, 1e-6));
  }
}

TEST_CASE("mel filterbank peaks move monotonically up the spectrum") {
  const vp::Matrix fb = vp::detail::mel_filterbank(26, 512, 16000);
  REQUIRE(fb.rows() == 26);
  REQUIRE(fb.cols() == 257);
  std::size_t last_peak = 0;
  for (std::size_t m = 0; m < fb.rows(); ++m) {
    const double* w = fb.row(m);
    std::size_t peak = 0;
    double best = -1.0, total = 0.0;
    for (std::size_t k = 0; k < fb.cols(); ++k) {
      total += w[k];
      if (w[k] > best) {
        best = w[k];
        peak = k;
      }
    }
    CHECK(total > 0.0);
    CHECK(peak >= last_peak);
    last_peak = peak;
  }
}

TEST_CASE("mfcc is invariant to signal gain beyond c0") {
  // Log-mel energies shift by a constant under gain; the DCT basis for k>=1
  // is orthogonal to constants, so all retained coefficients must be equal.
  std::vector<double> quiet(400), loud(400);
  for (std::size_t i = 0; i < quiet.size(); ++i) {
    const double s = std::sin(2.0 * std::numbers::pi * 1000.0 * double(i) / 16000.0) +
                     0.3 * std::sin(2.0 * std::numbers::pi * 2500.0 * double(i) / 16000.0);
    quiet[i] = 0.2 * s;
    loud[i] = 0.8 * s;
  }
  const vp::FeatureMatrix a = vp::mfcc(one_frame(quiet), 26, 13, 16000);
  const vp::FeatureMatrix b = vp::mfcc(one_frame(loud), 26, 13, 16000);
  REQUIRE(a.num_frames() == 1);
  REQUIRE(a.dim() == 13);
  for (std::size_t d = 0; d < 13; ++d) {
    CHECK_THAT(a.vectors(0, d), WithinAbs(b.vectors(0, d), 1e-8));
  }
}

TEST_CASE("mfcc rejects bad shapes") {
  std::vector<double> x(128, 0.1);
  CHECK_THROWS_MATCHES(vp::mfcc(one_frame(x), 26, 27, 16000), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
  CHECK_THROWS_MATCHES(vp::mfcc(one_frame(x), 0, 0, 16000), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
  CHECK_THROWS_MATCHES(vp::mfcc(one_frame(x), 26, 13, 0), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
}

TEST_CASE("lpc recovers the coefficients of a synthetic AR(2) process") {
  // x[n] = 1.2 x[n-1] - 0.72 x[n-2] + e[n], poles well inside the unit circle.
  vptest::GaussRng g(123);
  std::vector<double> x(4096, 0.0);
  for (std::size_t n = 2; n < x.size(); ++n) {
    x[n] = 1.2 * x[n - 1] - 0.72 * x[n - 2] + 0.05 * g.next();
  }
  // Drop the transient and analyze one long rectangular frame.
  const std::vector<double> steady(x.begin() + 512, x.end());
  const std::vector<vp::LpcEnvelope> envs = vp::lpc(one_frame(steady), 2);

  REQUIRE(envs.size() == 1);
  REQUIRE(envs[0].order == 2);
  CHECK_THAT(envs[0].coeffs[0], WithinAbs(1.2, 0.05));
  CHECK_THAT(envs[0].coeffs[1], WithinAbs(-0.72, 0.05));
  CHECK(envs[0].gain > 0.0);
  CHECK(vp::detail::is_stable_predictor(envs[0].coeffs));
}

TEST_CASE("lpc flags zero-energy frames instead of dividing by zero") {
  const std::vector<vp::LpcEnvelope> envs = vp::lpc(one_frame(std::vector<double>(64, 0.0)), 4);
  REQUIRE(envs.size() == 1);
  CHECK(envs[0].gain == 0.0);
  for (double c : envs[0].coeffs) CHECK(c == 0.0);
}

TEST_CASE("lpc_to_cepstrum matches the AR(1) closed form") {
  // For H(z) = 1/(1 - a z^-1) the cepstrum is c_n = a^n / n.
  const double a = 0.6;
  vp::LpcEnvelope env;
  env.order = 1;
  env.coeffs = {a};
  env.gain = 1.0;
  const std::vector<double> c = vp::lpc_to_cepstrum(env, 6);
  REQUIRE(c.size() == 6);
  for (int n = 1; n <= 6; ++n) {
    CHECK_THAT(c[static_cast<std::size_t>(n - 1)], WithinAbs(std::pow(a, n) / n, 1e-12));
  }
}

TEST_CASE("expand_bandwidth scales predictor coefficients geometrically") {
  vp::LpcEnvelope env;
  env.order = 2;
  env.coeffs = {1.2, -0.72};
  env.gain = 2.0;
  const vp::LpcEnvelope out = vp::expand_bandwidth(env, 0.9);
  CHECK_THAT(out.coeffs[0], WithinAbs(1.2 * 0.9, 1e-12));
  CHECK_THAT(out.coeffs[1], WithinAbs(-0.72 * 0.81, 1e-12));
  CHECK(out.gain == env.gain);
}

TEST_CASE("stack_features concatenates dims and optionally normalizes") {
  vp::FeatureMatrix a, b;
  a.meta = "mfcc;fl=400;hop=160;sr=16000;mel=26;n=2";
  b.meta = "lpcc;fl=400;hop=160;sr=16000;p=12;n=1";
  a.vectors = vp::Matrix(3, 2);
  b.vectors = vp::Matrix(3, 1);
  double v = 1.0;
  for (std::size_t f = 0; f < 3; ++f) {
    a.vectors(f, 0) = v++;
    a.vectors(f, 1) = v++;
    b.vectors(f, 0) = 10.0 * double(f);
  }

  SECTION("raw stacking keeps values and order") {
    const vp::FeatureMatrix s = vp::stack_features(a, b, false);
    REQUIRE(s.dim() == 3);
    REQUIRE(s.num_frames() == 3);
    CHECK(s.vectors(1, 0) == 3.0);
    CHECK(s.vectors(1, 1) == 4.0);
    CHECK(s.vectors(1, 2) == 10.0);
  }

  SECTION("cmvn yields zero mean, unit variance per dim") {
    const vp::FeatureMatrix s = vp::stack_features(a, b, true);
    for (std::size_t d = 0; d < s.dim(); ++d) {
      double mean = 0.0, var = 0.0;
      for (std::size_t f = 0; f < s.num_frames(); ++f) mean += s.vectors(f, d);
      mean /= double(s.num_frames());
      for (std::size_t f = 0; f < s.num_frames(); ++f) {
        var += (s.vectors(f, d) - mean) * (s.vectors(f, d) - mean);
      }
      var /= double(s.num_frames());
      CHECK_THAT(mean, WithinAbs(0.0, 1e-12));
      CHECK_THAT(var, WithinAbs(1.0, 1e-12));
    }
  }

  SECTION("constant dimension collapses to zeros under cmvn") {
    for (std::size_t f = 0; f < 3; ++f) b.vectors(f, 0) = 5.0;
    const vp::FeatureMatrix s = vp::stack_features(a, b, true);
    for (std::size_t f = 0; f < 3; ++f) CHECK(s.vectors(f, 2) == 0.0);
  }

  SECTION("frame count mismatch is rejected") {
    b.vectors = vp::Matrix(2, 1);
    CHECK_THROWS_MATCHES(vp::stack_features(a, b, false), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::FrameCountMismatch));
  }

  SECTION("geometry mismatch is rejected") {
    b.meta = "lpcc;fl=320;hop=160;sr=16000;p=12;n=1";
    CHECK_THROWS_MATCHES(vp::stack_features(a, b, false), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::FingerprintMismatch));
  }
}

TEST_CASE("extract_features produces the documented geometry and fingerprint") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& clip = fx.corpus.front().clip;
  const vp::FeatureConfig cfg;

  const vp::FeatureMatrix f = vp::extract_features(clip, cfg);
  CHECK(f.dim() == static_cast<std::size_t>(cfg.n_mfcc + cfg.n_lpc_ceps));
  CHECK(f.meta == cfg.fingerprint());

  const std::size_t flen = 400, hop = 160;  // 25 ms / 10 ms at 16 kHz
  const std::size_t expect = (clip.samples.size() - flen) / hop + 1;
  CHECK(f.num_frames() == expect);

  SECTION("sample-rate mismatch is rejected up front") {
    vp::AudioClip wrong = clip;
    wrong.sample_rate = 8000;
    CHECK_THROWS_MATCHES(vp::extract_features(wrong, cfg), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::SampleRateMismatch));
  }
}

TEST_CASE("feature fingerprints separate configurations") {
  vp::FeatureConfig a, b;
  CHECK(a.fingerprint() == b.fingerprint());
  b.cmvn = true;
  CHECK(a.fingerprint() != b.fingerprint());
  b = a;
  b.n_mels = 20;
  CHECK(a.fingerprint() != b.fingerprint());
  b = a;
  b.sample_rate = 8000;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("concat_features pools utterances row-wise") {
  vp::FeatureMatrix a, b;
  a.meta = b.meta = "testfeat";
  a.vectors = vp::Matrix(2, 3);
  b.vectors = vp::Matrix(1, 3);
  for (std::size_t d = 0; d < 3; ++d) {
    a.vectors(0, d) = double(d);
    a.vectors(1, d) = 10.0 + double(d);
    b.vectors(0, d) = 20.0 + double(d);
  }
  const vp::FeatureMatrix c = vp::concat_features({a, b});
  REQUIRE(c.num_frames() == 3);
  REQUIRE(c.dim() == 3);
  CHECK(c.vectors(0, 1) == 1.0);
  CHECK(c.vectors(1, 2) == 12.0);
  CHECK(c.vectors(2, 0) == 20.0);
  CHECK(c.meta == "testfeat");

  b.meta = "otherfeat";
  CHECK_THROWS_MATCHES(vp::concat_features({a, b}), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::FingerprintMismatch));
  CHECK_THROWS_MATCHES(vp::concat_features({}), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::EmptyList));
}
