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
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vp/audio.hpp"
#include "vp/dsp.hpp"
#include "vp/error.hpp"
#include "vp/features.hpp"
#include "vp/ioutil.hpp"
#include "vp/sourcefilter.hpp"

namespace vp {

constexpr double kMaxWarpAlpha = 0.349;
constexpr double kWarpGamma = 0.994;       // bandwidth expansion on warped envelopes
constexpr std::size_t kWarpCepsOrder = 40; // cepstrum length used for warping
constexpr std::size_t kWarpNfft = 512;

namespace detail {

/// All-pass frequency transform of a minimum-phase cepstrum c[0..m], where
/// c[0] carries the log gain. Output has m_out+1 entries. alpha = 0 is the
/// identity; successive warps compose as (a + b) / (1 + a b).
inline std::vector<double> freqt(const std::vector<double>& c, std::size_t m_out,
                                 double alpha) {
  const double b = 1.0 - alpha * alpha;
  std::vector<double> g(m_out + 1, 0.0), d(m_out + 1, 0.0);
  for (std::size_t step = c.size(); step-- > 0;) {
    d[0] = g[0];
    g[0] = c[step] + alpha * d[0];
    if (m_out >= 1) {
      d[1] = g[1];
      g[1] = b * d[0] + alpha * d[1];
    }
    for (std::size_t j = 2; j <= m_out; ++j) {
      d[j] = g[j];
      g[j] = d[j - 1] + alpha * (d[j] - g[j - 1]);
    }
  }
  return g;
}

/// [log gain, c1..cM] for an LPC envelope.
inline std::vector<double> envelope_cepstrum(const LpcEnvelope& env, std::size_t m) {
  std::vector<double> c(m + 1, 0.0);
  c[0] = std::log(std::max(env.gain, 1e-12));
  const std::vector<double> tail = lpc_to_cepstrum(env, m);
  std::copy(tail.begin(), tail.end(), c.begin() + 1);
  return c;
}

constexpr double kSpeechGainFloor = 1e-4;  // envelopes quieter than this are silence

}  // namespace detail

/// Warps the envelope's spectral axis by the all-pass factor `alpha` in the
/// cepstral domain, then refits a stable all-pole model of the same order
/// from the warped power spectrum (cosine-sum autocorrelation + Levinson).
inline LpcEnvelope warp_envelope(const LpcEnvelope& env, double alpha) {
  if (env.gain <= 1e-9) return env;  // silence stays silence
  if (std::abs(alpha) >= 1.0) throw Error(ErrorCode::ConfigInvalid, "|alpha| must be < 1");

  const std::vector<double> c = detail::envelope_cepstrum(env, kWarpCepsOrder);
  const std::vector<double> wc = detail::freqt(c, kWarpCepsOrder, alpha);

  const std::size_t half = kWarpNfft / 2;
  std::vector<double> power(half + 1);
  for (std::size_t i = 0; i <= half; ++i) {
    const double w = std::numbers::pi * static_cast<double>(i) / static_cast<double>(half);
    double logmag = wc[0];
    for (std::size_t k = 1; k <= kWarpCepsOrder; ++k) {
      logmag += wc[k] * std::cos(k * w);
    }
    power[i] = std::exp(2.0 * std::clamp(logmag, -60.0, 60.0));
  }

  const int p = env.order;
  std::vector<double> r(p + 1, 0.0);
  for (int k = 0; k <= p; ++k) {
    double acc = power[0] + (k % 2 == 0 ? power[half] : -power[half]);
    for (std::size_t i = 1; i < half; ++i) {
      acc += 2.0 * power[i] * std::cos(2.0 * std::numbers::pi * i * k /
                                       static_cast<double>(kWarpNfft));
    }
    r[k] = acc / static_cast<double>(kWarpNfft);
  }

  double err = 0.0;
  std::vector<double> a = detail::levinson(r, p, &err);
  if (!(err > 0.0) || !detail::is_stable_predictor(a)) {
    throw Error(ErrorCode::UnstableEnvelope, "warped envelope could not be refit");
  }
  LpcEnvelope out;
  out.order = p;
  out.coeffs = std::move(a);
  out.gain = std::sqrt(err);
  return out;
}

/// Long-term spectral and prosodic signature of one speaker.
struct VoiceProfile {
  std::string speaker_id;
  double log_f0_mean = 0.0;                    // natural log Hz over voiced frames
  double log_f0_std = 0.0;                     // population std, floored above 0
  std::vector<double> mean_envelope_cepstrum;  // [c0..cM] over speech frames
  double warp_alpha_ref = 0.0;                 // offset from the corpus centroid
  int sample_rate = 0;
  double voiced_seconds = 0.0;
};

/// Per-speaker statistics from non-parallel clips. Requires at least
/// `min_voiced_s` seconds of voiced audio.
inline VoiceProfile build_profile(const std::string& speaker_id,
                                  const std::vector<AudioClip>& clips,
                                  const AnalysisConfig& cfg = {},
                                  double min_voiced_s = 10.0) {
  if (clips.empty()) throw Error(ErrorCode::EmptyList, "no clips for " + speaker_id);
  VoiceProfile prof;
  prof.speaker_id = speaker_id;
  prof.sample_rate = clips.front().sample_rate;
  prof.mean_envelope_cepstrum.assign(kWarpCepsOrder + 1, 0.0);

  double log_sum = 0.0, log_sq_sum = 0.0;
  std::size_t voiced = 0, speech = 0;
  double hop_s = 0.0;
  for (const AudioClip& clip : clips) {
    if (clip.sample_rate != prof.sample_rate) {
      throw Error(ErrorCode::SampleRateMismatch, "mixed sample rates for " + speaker_id);
    }
    const SourceFilterDecomp d = analyze(clip, cfg);
    hop_s = static_cast<double>(d.hop) / d.sample_rate;
    for (std::size_t f = 0; f < d.num_frames(); ++f) {
      const double f0 = d.pitch.f0_at_sample(f * d.hop);
      if (f0 > 0.0) {
        const double lf = std::log(f0);
        log_sum += lf;
        log_sq_sum += lf * lf;
        ++voiced;
      }
      if (d.envelopes[f].gain > detail::kSpeechGainFloor) {
        const std::vector<double> c =
            detail::envelope_cepstrum(d.envelopes[f], kWarpCepsOrder);
        for (std::size_t k = 0; k < c.size(); ++k) prof.mean_envelope_cepstrum[k] += c[k];
        ++speech;
      }
    }
  }
  prof.voiced_seconds = static_cast<double>(voiced) * hop_s;
  if (voiced == 0 || speech == 0 || prof.voiced_seconds < min_voiced_s) {
    throw Error(ErrorCode::InsufficientVoicedData,
                speaker_id + ": " + std::to_string(prof.voiced_seconds) +
                    " voiced seconds, need " + std::to_string(min_voiced_s));
  }
  const double n = static_cast<double>(voiced);
  prof.log_f0_mean = log_sum / n;
  prof.log_f0_std =
      std::max(std::sqrt(std::max(log_sq_sum / n - prof.log_f0_mean * prof.log_f0_mean,
                                  0.0)),
               1e-6);
  for (double& v : prof.mean_envelope_cepstrum) v /= static_cast<double>(speech);
  return prof;
}

/// Places every profile on a shared warp axis: warp_alpha_ref is the
/// all-pass factor that best maps the corpus centroid cepstrum onto the
/// speaker's. Gain (c0) is excluded from the fit.
inline void fit_warp_coordinates(std::vector<VoiceProfile>& profiles) {
  if (profiles.empty()) throw Error(ErrorCode::EmptyList, "no profiles");
  const std::size_t m = profiles.front().mean_envelope_cepstrum.size();
  std::vector<double> centroid(m, 0.0);
  for (const VoiceProfile& p : profiles) {
    if (p.mean_envelope_cepstrum.size() != m) {
      throw Error(ErrorCode::ConfigInvalid, "profile cepstrum sizes differ");
    }
    for (std::size_t k = 0; k < m; ++k) centroid[k] += p.mean_envelope_cepstrum[k];
  }
  for (double& v : centroid) v /= static_cast<double>(profiles.size());

  for (VoiceProfile& p : profiles) {
    double best_alpha = 0.0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (double alpha = -kMaxWarpAlpha; alpha <= kMaxWarpAlpha + 1e-12; alpha += 0.002) {
      const std::vector<double> warped = detail::freqt(centroid, m - 1, alpha);
      double cost = 0.0;
      for (std::size_t k = 1; k < m; ++k) {
        const double dev = warped[k] - p.mean_envelope_cepstrum[k];
        cost += dev * dev;
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_alpha = alpha;
      }
    }
    p.warp_alpha_ref = best_alpha;
  }
}

/// Directed source-to-target mapping parameters.
struct ConversionModel {
  std::string source_id;
  std::string target_id;
  double pitch_shift = 0.0;  // delta of log-F0 means
  double pitch_scale = 1.0;  // ratio of log-F0 stds
  double warp_alpha = 0.0;
  std::string version = "1";
  int sample_rate = 0;
};

inline ConversionModel train_converter(const VoiceProfile& source,
                                       const VoiceProfile& target) {
  if (source.speaker_id == target.speaker_id) {
    throw Error(ErrorCode::SameSpeaker,
                "cannot convert " + source.speaker_id + " to itself");
  }
  if (source.sample_rate != target.sample_rate) {
    throw Error(ErrorCode::SampleRateMismatch, "profiles at different rates");
  }
  ConversionModel m;
  m.source_id = source.speaker_id;
  m.target_id = target.speaker_id;
  m.sample_rate = source.sample_rate;
  m.pitch_shift = target.log_f0_mean - source.log_f0_mean;
  m.pitch_scale = target.log_f0_std / source.log_f0_std;
  m.warp_alpha = std::clamp(target.warp_alpha_ref - source.warp_alpha_ref,
                            -kMaxWarpAlpha, kMaxWarpAlpha);
  return m;
}

/// Pitch-synchronous overlap-add on the residual. target_f0[f] gives the
/// desired F0 for frame f (0 keeps the frame untouched). Unvoiced regions
/// pass through; uncovered samples inside voiced runs fall back to the
/// original residual so segment edges stay continuous.
inline std::vector<float> psola_residual(const SourceFilterDecomp& d,
                                         const std::vector<double>& target_f0) {
  std::vector<float> out(d.residual);
  const std::size_t n = out.size();
  const std::vector<std::size_t> epochs = detect_epochs(d);
  if (epochs.empty() || n == 0) return out;

  auto target_at = [&](std::size_t pos) -> double {
    if (target_f0.empty()) return 0.0;
    return target_f0[std::min(pos / d.pitch.hop, target_f0.size() - 1)];
  };

  std::vector<double> acc, wsum;
  std::size_t pos = 0;
  while (pos < n) {
    if (d.pitch.f0_at_sample(pos) <= 0.0) {
      pos += d.pitch.hop;
      continue;
    }
    std::size_t seg_begin = pos;
    std::size_t seg_end = pos;
    while (seg_end < n && d.pitch.f0_at_sample(seg_end) > 0.0) seg_end += d.pitch.hop;
    seg_end = std::min(seg_end, n);
    pos = seg_end;

    auto first = std::lower_bound(epochs.begin(), epochs.end(), seg_begin);
    if (first == epochs.end() || *first >= seg_end) continue;

    const std::size_t seg_len = seg_end - seg_begin;
    acc.assign(seg_len, 0.0);
    wsum.assign(seg_len, 0.0);

    const double min_period = d.sample_rate / 500.0;

    // One grain: nearest source epoch, raised-cosine window spanning the
    // smaller of source and target periods. Writes clip to the segment.
    auto place_grain = [&](double t, double t_period) {
      const long ti = std::lround(t);
      auto it = std::lower_bound(epochs.begin(), epochs.end(),
                                 static_cast<std::size_t>(std::max<long>(ti, 0)));
      std::size_t src_epoch;
      if (it == epochs.end()) {
        src_epoch = epochs.back();
      } else if (it == epochs.begin()) {
        src_epoch = *it;
      } else {
        src_epoch = (static_cast<long>(*it) - ti) < (ti - static_cast<long>(*(it - 1)))
                        ? *it
                        : *(it - 1);
      }
      const double sf0 = d.pitch.f0_at_sample(src_epoch);
      const double s_period = sf0 > 0.0 ? d.sample_rate / sf0 : t_period;

      const long L = std::max<long>(std::lround(std::min(s_period, t_period)), 8);
      for (long i = -L; i <= L; ++i) {
        const long src = static_cast<long>(src_epoch) + i;
        const long dst = ti + i;
        if (src < 0 || src >= static_cast<long>(n)) continue;
        if (dst < static_cast<long>(seg_begin) || dst >= static_cast<long>(seg_end)) {
          continue;
        }
        const double w =
            0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i + L) /
                                 static_cast<double>(L));
        acc[dst - seg_begin] += w * d.residual[src];
        wsum[dst - seg_begin] += w;
      }
    };

    auto period_at = [&](double t) {
      const std::size_t ti =
          static_cast<std::size_t>(std::max(std::lround(t), long{0}));
      double tf0 = target_at(ti);
      if (tf0 <= 0.0) tf0 = d.pitch.f0_at_sample(std::min<std::size_t>(ti, n - 1));
      if (tf0 <= 0.0) return 0.0;
      return std::max(d.sample_rate / tf0, min_period);
    };

    // Chain target epochs across the whole run, including backwards from
    // the first detected epoch, so segment edges carry the target period
    // rather than leftover source residual.
    const double anchor = static_cast<double>(*first);
    std::size_t guard = 4 * seg_len / static_cast<std::size_t>(min_period) + 16;
    for (double t = anchor;; t -= period_at(t)) {
      const double p = period_at(t);
      if (p <= 0.0 || guard-- == 0) break;
      if (t + p < static_cast<double>(seg_begin)) break;
      if (t != anchor) place_grain(t, p);
    }
    guard = 4 * seg_len / static_cast<std::size_t>(min_period) + 16;
    for (double t = anchor;; t += period_at(t)) {
      const double p = period_at(t);
      if (p <= 0.0 || guard-- == 0) break;
      if (t - p >= static_cast<double>(seg_end)) break;
      place_grain(t, p);
    }

    for (std::size_t i = 0; i < seg_len; ++i) {
      if (wsum[i] >= 1.0) {
        out[seg_begin + i] = static_cast<float>(acc[i] / wsum[i]);
      } else {
        out[seg_begin + i] =
            static_cast<float>(acc[i] + (1.0 - wsum[i]) * d.residual[seg_begin + i]);
      }
    }
  }
  return out;
}

/// Applies a conversion model: per voiced frame
/// F0' = exp(shift + scale*(log F0 - sourceMean) + sourceMean) with
/// sourceMean the utterance's voiced mean log F0, realized by residual
/// PSOLA, plus an all-pass envelope warp. Neutral stages are skipped, so an
/// identity model reproduces the input through the full chain. Output is
/// RMS-matched to the input and peak-limited to 1.
inline AudioClip convert(const AudioClip& clip, const ConversionModel& model,
                         const AnalysisConfig& cfg = {}) {
  if (model.sample_rate != 0 && model.sample_rate != clip.sample_rate) {
    throw Error(ErrorCode::SampleRateMismatch,
                "model trained at " + std::to_string(model.sample_rate) + " Hz");
  }
  if (model.pitch_scale <= 0.0) {
    throw Error(ErrorCode::ConfigInvalid, "pitch_scale must be > 0");
  }
  SourceFilterDecomp d = analyze(clip, cfg);

  const bool pitch_neutral =
      std::abs(model.pitch_shift) < 1e-9 && std::abs(model.pitch_scale - 1.0) < 1e-9;
  if (!pitch_neutral && d.pitch.voiced_fraction() > 0.0) {
    const double mu = d.pitch.voiced_mean_log_f0();
    std::vector<double> target(d.pitch.num_frames(), 0.0);
    for (std::size_t f = 0; f < d.pitch.num_frames(); ++f) {
      const double f0 = d.pitch.f0[f];
      if (f0 <= 0.0) continue;
      target[f] =
          std::exp(model.pitch_shift + model.pitch_scale * (std::log(f0) - mu) + mu);
    }
    d.residual = psola_residual(d, target);
  }

  if (std::abs(model.warp_alpha) > 1e-9) {
    for (LpcEnvelope& env : d.envelopes) {
      env = expand_bandwidth(warp_envelope(env, model.warp_alpha), kWarpGamma);
    }
  }

  AudioClip out = synthesize(d);
  out.id = clip.id;

  const double in_rms = rms(clip);
  const double out_rms = rms(out);
  if (in_rms > 0.0 && out_rms > 0.0) {
    const double g = in_rms / out_rms;
    for (float& s : out.samples) s = static_cast<float>(s * g);
  }
  float peak = 0.0f;
  for (float s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0f) {
    const float g = 0.999f / peak;
    for (float& s : out.samples) s *= g;
  }
  return out;
}

/// Pluggable conversion strategy, for swapping the DSP core out in tests.
class ConversionBackend {
 public:
  virtual ~ConversionBackend() = default;
  virtual AudioClip convert(const AudioClip& clip, const ConversionModel& model) = 0;
  virtual std::string name() const = 0;
};

class SourceFilterBackend final : public ConversionBackend {
 public:
  explicit SourceFilterBackend(AnalysisConfig cfg = {}) : cfg_(cfg) {}
  AudioClip convert(const AudioClip& clip, const ConversionModel& model) override {
    return vp::convert(clip, model, cfg_);
  }
  std::string name() const override { return "sourcefilter"; }

 private:
  AnalysisConfig cfg_;
};

/// Directed-pair model store.
class ConversionRegistry {
 public:
  void add(ConversionModel model) {
    if (model.source_id == model.target_id) {
      throw Error(ErrorCode::SameSpeaker, "degenerate pair " + model.source_id);
    }
    const auto key = std::make_pair(model.source_id, model.target_id);
    if (models_.count(key)) {
      throw Error(ErrorCode::ConfigInvalid, "pair already registered: " +
                                                model.source_id + "->" + model.target_id);
    }
    models_.emplace(key, std::move(model));
  }

  bool has(const std::string& source, const std::string& target) const {
    return models_.count({source, target}) > 0;
  }

  const ConversionModel& get(const std::string& source, const std::string& target) const {
    auto it = models_.find({source, target});
    if (it == models_.end()) {
      throw Error(ErrorCode::ConfigInvalid, "no model for " + source + "->" + target);
    }
    return it->second;
  }

  std::size_t size() const { return models_.size(); }

  std::vector<std::pair<std::string, std::string>> pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(models_.size());
    for (const auto& [key, m] : models_) out.push_back(key);
    return out;
  }

  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    for (const auto& [key, m] : models_) {
      out.push_back(key.first);
      out.push_back(key.second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<std::string> targets_for(const std::string& source) const {
    std::vector<std::string> out;
    for (const auto& [key, m] : models_) {
      if (key.first == source) out.push_back(key.second);
    }
    return out;  // map order keeps these sorted
  }

 private:
  std::map<std::pair<std::string, std::string>, ConversionModel> models_;
};

/// Fits warp coordinates and trains every directed pair: n profiles yield
/// n*(n-1) models.
inline ConversionRegistry train_all_converters(std::vector<VoiceProfile> profiles) {
  if (profiles.size() < 2) {
    throw Error(ErrorCode::ConfigInvalid, "need at least two profiles");
  }
  fit_warp_coordinates(profiles);
  ConversionRegistry reg;
  for (const VoiceProfile& s : profiles) {
    for (const VoiceProfile& t : profiles) {
      if (s.speaker_id == t.speaker_id) continue;
      reg.add(train_converter(s, t));
    }
  }
  return reg;
}

// --- serialization (format VPVC1) ---

inline nlohmann::json conversion_model_to_json(const ConversionModel& m) {
  return nlohmann::json{
      {"format", "VPVC1"},
      {"source_id", m.source_id},
      {"target_id", m.target_id},
      {"pitch_map", {{"shift", m.pitch_shift}, {"scale", m.pitch_scale}}},
      {"warp_alpha", m.warp_alpha},
      {"version", m.version},
      {"sample_rate", m.sample_rate}};
}

inline ConversionModel conversion_model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "VPVC1") {
    throw Error(ErrorCode::ModelFormatInvalid, "expected VPVC1 document");
  }
  ConversionModel m;
  m.source_id = j.at("source_id").get<std::string>();
  m.target_id = j.at("target_id").get<std::string>();
  m.pitch_shift = j.at("pitch_map").at("shift").get<double>();
  m.pitch_scale = j.at("pitch_map").at("scale").get<double>();
  m.warp_alpha = j.at("warp_alpha").get<double>();
  m.version = j.value("version", "1");
  m.sample_rate = j.value("sample_rate", 0);
  if (m.source_id == m.target_id) {
    throw Error(ErrorCode::ModelFormatInvalid, "source equals target");
  }
  if (m.pitch_scale <= 0.0) {
    throw Error(ErrorCode::ModelFormatInvalid, "pitch scale must be positive");
  }
  if (std::abs(m.warp_alpha) > kMaxWarpAlpha + 1e-9) {
    throw Error(ErrorCode::ModelFormatInvalid, "warp_alpha out of range");
  }
  return m;
}

inline nlohmann::json profile_to_json(const VoiceProfile& p) {
  return nlohmann::json{{"format", "VPPROF1"},
                        {"speaker_id", p.speaker_id},
                        {"log_f0_mean", p.log_f0_mean},
                        {"log_f0_std", p.log_f0_std},
                        {"mean_envelope_cepstrum", p.mean_envelope_cepstrum},
                        {"warp_alpha_ref", p.warp_alpha_ref},
                        {"sample_rate", p.sample_rate},
                        {"voiced_seconds", p.voiced_seconds}};
}

inline VoiceProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "VPPROF1") {
    throw Error(ErrorCode::ModelFormatInvalid, "expected VPPROF1 document");
  }
  VoiceProfile p;
  p.speaker_id = j.at("speaker_id").get<std::string>();
  p.log_f0_mean = j.at("log_f0_mean").get<double>();
  p.log_f0_std = j.at("log_f0_std").get<double>();
  p.mean_envelope_cepstrum = j.at("mean_envelope_cepstrum").get<std::vector<double>>();
  p.warp_alpha_ref = j.at("warp_alpha_ref").get<double>();
  p.sample_rate = j.at("sample_rate").get<int>();
  p.voiced_seconds = j.value("voiced_seconds", 0.0);
  return p;
}

inline void save_conversion_registry(const ConversionRegistry& reg,
                                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "models", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  nlohmann::json index{{"format", "VPVCDIR1"}, {"models", nlohmann::json::array()}};
  std::set<std::string> used;
  for (const auto& [source, target] : reg.pairs()) {
    std::string rel = "models/" + detail::sanitize_filename(source) + "__" +
                      detail::sanitize_filename(target) + ".json";
    while (!used.insert(rel).second) {
      rel.insert(rel.size() - 5, "_");  // distinct pairs may sanitize identically
    }
    detail::write_json_file(conversion_model_to_json(reg.get(source, target)), dir / rel);
    index["models"].push_back(rel);
  }
  detail::write_json_file(index, dir / "index.json");
}

inline void save_profiles(const std::vector<VoiceProfile>& profiles,
                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  nlohmann::json index{{"format", "VPPROFDIR1"}, {"profiles", nlohmann::json::array()}};
  std::set<std::string> used;
  for (const VoiceProfile& p : profiles) {
    std::string rel = detail::sanitize_filename(p.speaker_id) + ".json";
    while (rel == "index.json" || !used.insert(rel).second) {
      rel.insert(rel.size() - 5, "_");
    }
    detail::write_json_file(profile_to_json(p), dir / rel);
    index["profiles"].push_back(rel);
  }
  detail::write_json_file(index, dir / "index.json");
}

inline std::vector<VoiceProfile> load_profiles(const std::filesystem::path& dir) {
  const nlohmann::json index = detail::read_json_file(dir / "index.json");
  if (index.value("format", "") != "VPPROFDIR1") {
    throw Error(ErrorCode::ModelFormatInvalid, "expected VPPROFDIR1 index");
  }
  std::vector<VoiceProfile> out;
  for (const auto& rel : index.at("profiles")) {
    out.push_back(profile_from_json(detail::read_json_file(dir / rel.get<std::string>())));
  }
  return out;
}

inline ConversionRegistry load_conversion_registry(const std::filesystem::path& dir) {
  const nlohmann::json index = detail::read_json_file(dir / "index.json");
  if (index.value("format", "") != "VPVCDIR1") {
    throw Error(ErrorCode::ModelFormatInvalid, "expected VPVCDIR1 index");
  }
  ConversionRegistry reg;
  for (const auto& rel : index.at("models")) {
    reg.add(conversion_model_from_json(detail::read_json_file(dir / rel.get<std::string>())));
  }
  detail::registry_load_count()++;
  return reg;
}

}  // namespace vp
