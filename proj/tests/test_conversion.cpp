// Copyright 2026 The voiceprivacy Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"
#include "vp/conversion.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

vp::LpcEnvelope resonator(double hz, double bandwidth, int sr) {
  const double r = std::exp(-std::numbers::pi * bandwidth / sr);
  const double th = 2.0 * std::numbers::pi * hz / sr;
  vp::LpcEnvelope env;
  env.order = 2;
  env.coeffs = {2.0 * r * std::cos(th), -r * r};
  env.gain = 1.0;
  return env;
}

double envelope_peak_hz(const vp::LpcEnvelope& env, int sr) {
  double best = -1e300, best_hz = 0.0;
  for (int i = 0; i <= 4096; ++i) {
    const double w = std::numbers::pi * double(i) / 4096.0;
    double re = 1.0, im = 0.0;
    for (std::size_t k = 0; k < env.coeffs.size(); ++k) {
      re -= env.coeffs[k] * std::cos(w * double(k + 1));
      im += env.coeffs[k] * std::sin(w * double(k + 1));
    }
    const double mag = 1.0 / (re * re + im * im);
    if (mag > best) {
      best = mag;
      best_hz = w / std::numbers::pi * double(sr) / 2.0;
    }
  }
  return best_hz;
}

// Exact frequency image of the all-pass bilinear warp.
double warped_hz(double hz, double alpha, int sr) {
  const double w = 2.0 * std::numbers::pi * hz / sr;
  const double w2 = w + 2.0 * std::atan2(alpha * std::sin(w), 1.0 - alpha * std::cos(w));
  return w2 * sr / (2.0 * std::numbers::pi);
}

double log_spectral_distance_db(const vp::LpcEnvelope& a, const vp::LpcEnvelope& b) {
  double acc = 0.0;
  const int n = 256;
  for (int i = 1; i < n; ++i) {
    const double w = std::numbers::pi * double(i) / n;
    auto logmag = [&](const vp::LpcEnvelope& e) {
      double re = 1.0, im = 0.0;
      for (std::size_t k = 0; k < e.coeffs.size(); ++k) {
        re -= e.coeffs[k] * std::cos(w * double(k + 1));
        im += e.coeffs[k] * std::sin(w * double(k + 1));
      }
      return std::log(std::max(e.gain, 1e-12)) - 0.5 * std::log(re * re + im * im);
    };
    const double d = 20.0 / std::numbers::ln10 * (logmag(a) - logmag(b));
    acc += d * d;
  }
  return std::sqrt(acc / (n - 1));
}

}  // namespace

TEST_CASE("freqt with alpha zero is the identity") {
  std::vector<double> c(21);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = std::pow(0.7, double(k));
  const std::vector<double> out = vp::detail::freqt(c, 20, 0.0);
  REQUIRE(out.size() == 21);
  for (std::size_t k = 0; k < c.size(); ++k) {
    CHECK_THAT(out[k], WithinAbs(c[k], 1e-12));
  }
}

TEST_CASE("freqt warps compose through the Moebius rule") {
  std::vector<double> c(41);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = std::pow(0.5, double(k));

  const double a = 0.15, b = 0.1;
  const double combined = (a + b) / (1.0 + a * b);
  const std::vector<double> two_step = vp::detail::freqt(vp::detail::freqt(c, 40, a), 40, b);
  const std::vector<double> one_step = vp::detail::freqt(c, 40, combined);
  for (std::size_t k = 0; k < 20; ++k) {  // high orders lose truncation bits
    CHECK_THAT(two_step[k], WithinAbs(one_step[k], 1e-6));
  }

  SECTION("inverse warp cancels exactly") {
    const std::vector<double> back = vp::detail::freqt(vp::detail::freqt(c, 40, a), 40, -a);
    for (std::size_t k = 0; k < 20; ++k) {
      CHECK_THAT(back[k], WithinAbs(c[k], 1e-6));
    }
  }
}

TEST_CASE("warp_envelope moves a formant to its analytic image") {
  const int sr = 16000;
  const vp::LpcEnvelope env = resonator(1000.0, 100.0, sr);

  for (double alpha : {-0.2, -0.1, 0.1, 0.2}) {
    const vp::LpcEnvelope w = vp::warp_envelope(env, alpha);
    CHECK(vp::detail::is_stable_predictor(w.coeffs));
    const double want = warped_hz(1000.0, alpha, sr);
    CHECK_THAT(envelope_peak_hz(w, sr), WithinRel(want, 0.02));
  }

  SECTION("positive alpha raises formants, negative lowers them") {
    const double up = envelope_peak_hz(vp::warp_envelope(env, 0.1), sr);
    const double down = envelope_peak_hz(vp::warp_envelope(env, -0.1), sr);
    CHECK(down < 1000.0);
    CHECK(1000.0 < up);
  }

  SECTION("warp then unwarp approximately returns the original shape") {
    // Each warp refits an order-2 model of a spectrum that is no longer
    // order-2, so the inverse is approximate. 2 dB is well below the
    // distortion of a one-way 0.15 warp (peak moves ~340 Hz).
    const vp::LpcEnvelope round =
        vp::warp_envelope(vp::warp_envelope(env, 0.15), -0.15);
    CHECK(log_spectral_distance_db(env, round) < 2.0);
  }

  SECTION("silent envelopes pass through untouched") {
    vp::LpcEnvelope quiet = env;
    quiet.gain = 0.0;
    const vp::LpcEnvelope out = vp::warp_envelope(quiet, 0.2);
    CHECK(out.coeffs == quiet.coeffs);
    CHECK(out.gain == 0.0);
  }

  SECTION("non-allpass alpha is rejected") {
    CHECK_THROWS_MATCHES(vp::warp_envelope(env, 1.0), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
  }
}

TEST_CASE("build_profile captures speaker prosody") {
  const auto& fx = vptest::trained3();

  for (const vp::VoiceProfile& p : fx.models.profiles) {
    const vp::SyntheticSpeaker* spk = nullptr;
    for (const auto& s : fx.bank) {
      if (s.id == p.speaker_id) spk = &s;
    }
    REQUIRE(spk != nullptr);
    // Voiced mean tracks the speaker's base F0 (synthesis adds vibrato and
    // per-utterance variation, so this is a coarse band).
    CHECK_THAT(std::exp(p.log_f0_mean), WithinRel(spk->f0, 0.15));
    CHECK(p.log_f0_std > 1e-6);
    CHECK(p.log_f0_std < 0.5);
    CHECK(p.voiced_seconds >= fx.cfg.min_voiced_s);
    CHECK(p.sample_rate == 16000);
    REQUIRE(p.mean_envelope_cepstrum.size() == vp::kWarpCepsOrder + 1);
  }
}

TEST_CASE("build_profile enforces its data gates") {
  const auto& fx = vptest::trained3();
  const std::vector<vp::AudioClip>& clips = fx.train.at("spk00");

  SECTION("empty clip list") {
    CHECK_THROWS_MATCHES(vp::build_profile("spk00", {}), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::EmptyList));
  }
  SECTION("not enough voiced audio") {
    CHECK_THROWS_MATCHES(vp::build_profile("spk00", {clips.front()}, {}, 60.0),
                         vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::InsufficientVoicedData));
  }
  SECTION("mixed sample rates") {
    std::vector<vp::AudioClip> mixed = {clips[0], clips[1]};
    mixed[1].sample_rate = 8000;
    CHECK_THROWS_MATCHES(vp::build_profile("spk00", mixed, {}, 1.0), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::SampleRateMismatch));
  }
}

TEST_CASE("warp coordinates order speakers by vocal-tract scale") {
  const auto& fx = vptest::trained3();
  // Bank formant scales: spk00 = 1.22, spk01 = 0.82, spk02 = 1.12. Larger
  // scale means formants sit higher, which maps to larger alpha.
  double a00 = 0.0, a01 = 0.0, a02 = 0.0;
  for (const auto& p : fx.models.profiles) {
    if (p.speaker_id == "spk00") a00 = p.warp_alpha_ref;
    if (p.speaker_id == "spk01") a01 = p.warp_alpha_ref;
    if (p.speaker_id == "spk02") a02 = p.warp_alpha_ref;
  }
  CHECK(a01 < a02);
  CHECK(a02 < a00);

  std::vector<vp::VoiceProfile> none;
  CHECK_THROWS_MATCHES(vp::fit_warp_coordinates(none), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::EmptyList));
}

TEST_CASE("train_converter derives mapping parameters from the profiles") {
  const auto& fx = vptest::trained3();
  const auto& profiles = fx.models.profiles;
  REQUIRE(profiles.size() == 3);
  const vp::VoiceProfile& s = profiles[0];
  const vp::VoiceProfile& t = profiles[1];

  const vp::ConversionModel m = vp::train_converter(s, t);
  CHECK(m.source_id == s.speaker_id);
  CHECK(m.target_id == t.speaker_id);
  CHECK(m.sample_rate == s.sample_rate);
  CHECK_THAT(m.pitch_shift, WithinAbs(t.log_f0_mean - s.log_f0_mean, 1e-15));
  CHECK_THAT(m.pitch_scale, WithinAbs(t.log_f0_std / s.log_f0_std, 1e-15));
  CHECK_THAT(m.warp_alpha,
             WithinAbs(std::clamp(t.warp_alpha_ref - s.warp_alpha_ref,
                                  -vp::kMaxWarpAlpha, vp::kMaxWarpAlpha),
                       1e-15));

  CHECK_THROWS_MATCHES(vp::train_converter(s, s), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::SameSpeaker));

  vp::VoiceProfile other = t;
  other.sample_rate = 8000;
  CHECK_THROWS_MATCHES(vp::train_converter(s, other), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::SampleRateMismatch));
}

TEST_CASE("identity conversion reconstructs the waveform") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& in = fx.test.begin()->second.front();

  vp::ConversionModel ident;
  ident.source_id = "a";
  ident.target_id = "b";
  const vp::AudioClip out = vp::convert(in, ident);

  REQUIRE(out.samples.size() == in.samples.size());
  CHECK(out.sample_rate == in.sample_rate);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    num += double(in.samples[i]) * in.samples[i];
    const double d = double(in.samples[i]) - out.samples[i];
    den += d * d;
  }
  CHECK(10.0 * std::log10(num / (den + 1e-300)) > 40.0);
}

TEST_CASE("pitch shift lands on the requested ratio") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& in = fx.test.at("spk00").front();

  vp::ConversionModel m;
  m.source_id = "a";
  m.target_id = "b";
  m.pitch_shift = std::log(1.5);
  const vp::AudioClip up = vp::convert(in, m);

  REQUIRE(up.samples.size() == in.samples.size());
  const double ratio = vptest::median_paired_f0_ratio(in, up);
  CHECK_THAT(ratio, WithinRel(1.5, 0.08));

  SECTION("downward shifts work symmetrically") {
    m.pitch_shift = std::log(1.0 / 1.3);
    const vp::AudioClip down = vp::convert(in, m);
    CHECK_THAT(vptest::median_paired_f0_ratio(in, down), WithinRel(1.0 / 1.3, 0.08));
  }
}

TEST_CASE("spectral warp changes the envelope while preserving duration") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& in = fx.test.at("spk01").front();

  vp::ConversionModel m;
  m.source_id = "a";
  m.target_id = "b";
  m.warp_alpha = 0.2;
  const vp::AudioClip out = vp::convert(in, m);

  REQUIRE(out.samples.size() == in.samples.size());
  CHECK(vptest::sum_abs_diff(in, out) / double(in.samples.size()) > 1e-4);
  // Loudness is matched back to the input.
  CHECK_THAT(vp::rms(out), WithinRel(vp::rms(in), 0.05));
}

TEST_CASE("convert validates model and config") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& in = fx.test.begin()->second.front();

  vp::ConversionModel m;
  m.source_id = "a";
  m.target_id = "b";

  SECTION("sample-rate pinned models refuse foreign clips") {
    m.sample_rate = 8000;
    CHECK_THROWS_MATCHES(vp::convert(in, m), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::SampleRateMismatch));
  }
  SECTION("non-positive pitch scale") {
    m.pitch_scale = 0.0;
    CHECK_THROWS_MATCHES(vp::convert(in, m), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
  }
}

TEST_CASE("conversion registry holds every directed pair") {
  const auto& fx = vptest::trained3();
  const vp::ConversionRegistry& reg = fx.models.conversions;

  CHECK(reg.size() == 6);  // 3 * 2 directed pairs
  const std::vector<std::string> ids{"spk00", "spk01", "spk02"};
  for (const auto& s : ids) {
    for (const auto& t : ids) {
      CHECK(reg.has(s, t) == (s != t));
    }
    CHECK(reg.targets_for(s).size() == 2);
  }
  CHECK(reg.speakers() == ids);
  CHECK(reg.pairs().size() == 6);
  CHECK_THROWS_MATCHES(reg.get("spk00", "ghost"), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));

  SECTION("train_all_converters needs two profiles") {
    CHECK_THROWS_MATCHES(vp::train_all_converters({fx.models.profiles[0]}), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
  }
  SECTION("degenerate and duplicate pairs are rejected") {
    vp::ConversionRegistry r;
    vp::ConversionModel m = reg.get("spk00", "spk01");
    r.add(m);
    CHECK_THROWS_MATCHES(r.add(m), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));
    m.target_id = m.source_id;
    CHECK_THROWS_MATCHES(r.add(m), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::SameSpeaker));
  }
}

TEST_CASE("conversion model JSON round trip") {
  const auto& fx = vptest::trained3();
  const vp::ConversionModel m = fx.models.conversions.get("spk00", "spk01");

  const nlohmann::json j = vp::conversion_model_to_json(m);
  CHECK(j.at("format") == "VPVC1");
  CHECK(j.contains("pitch_map"));

  const vp::ConversionModel back =
      vp::conversion_model_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.source_id == m.source_id);
  CHECK(back.target_id == m.target_id);
  CHECK(back.pitch_shift == m.pitch_shift);
  CHECK(back.pitch_scale == m.pitch_scale);
  CHECK(back.warp_alpha == m.warp_alpha);
  CHECK(back.sample_rate == m.sample_rate);
  CHECK(back.version == m.version);

  SECTION("validation rejects corrupt documents") {
    nlohmann::json bad = j;
    bad["format"] = "VPVC9";
    CHECK_THROWS_MATCHES(vp::conversion_model_from_json(bad), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ModelFormatInvalid));
    bad = j;
    bad["target_id"] = bad["source_id"];
    CHECK_THROWS_MATCHES(vp::conversion_model_from_json(bad), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ModelFormatInvalid));
    bad = j;
    bad["pitch_map"]["scale"] = -1.0;
    CHECK_THROWS_MATCHES(vp::conversion_model_from_json(bad), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ModelFormatInvalid));
    bad = j;
    bad["warp_alpha"] = 0.9;
    CHECK_THROWS_MATCHES(vp::conversion_model_from_json(bad), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ModelFormatInvalid));
  }
}

TEST_CASE("profile and registry directory round trips") {
  const auto& fx = vptest::trained3();
  vptest::ScopedDir dir("convdirs");

  SECTION("profiles") {
    vp::save_profiles(fx.models.profiles, dir.path / "profiles");
    const std::vector<vp::VoiceProfile> back = vp::load_profiles(dir.path / "profiles");
    REQUIRE(back.size() == fx.models.profiles.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      const vp::VoiceProfile& a = fx.models.profiles[i];
      const vp::VoiceProfile& b = back[i];
      CHECK(a.speaker_id == b.speaker_id);
      CHECK(a.log_f0_mean == b.log_f0_mean);
      CHECK(a.log_f0_std == b.log_f0_std);
      CHECK(a.warp_alpha_ref == b.warp_alpha_ref);
      CHECK(a.mean_envelope_cepstrum == b.mean_envelope_cepstrum);
      CHECK(a.sample_rate == b.sample_rate);
    }
  }

  SECTION("conversion registry") {
    vp::save_conversion_registry(fx.models.conversions, dir.path / "reg");
    const vp::ConversionRegistry back = vp::load_conversion_registry(dir.path / "reg");
    CHECK(back.size() == fx.models.conversions.size());
    for (const auto& [s, t] : fx.models.conversions.pairs()) {
      const vp::ConversionModel& a = fx.models.conversions.get(s, t);
      const vp::ConversionModel& b = back.get(s, t);
      CHECK(a.pitch_shift == b.pitch_shift);
      CHECK(a.pitch_scale == b.pitch_scale);
      CHECK(a.warp_alpha == b.warp_alpha);
    }
  }
}

TEST_CASE("SourceFilterBackend forwards to convert") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& in = fx.test.begin()->second.front();

  vp::SourceFilterBackend backend;
  CHECK(backend.name() == "sourcefilter");

  vp::ConversionModel ident;
  ident.source_id = "a";
  ident.target_id = "b";
  const vp::AudioClip via_backend = backend.convert(in, ident);
  const vp::AudioClip direct = vp::convert(in, ident);
  CHECK(via_backend.samples == direct.samples);
}
