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
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vp/audio.hpp"
#include "vp/conversion.hpp"
#include "vp/error.hpp"
#include "vp/features.hpp"
#include "vp/matrix.hpp"
#include "vp/selection.hpp"
#include "vp/sid.hpp"
#include "vp/transcribe.hpp"

namespace vp {

/// Lowercases, strips leading and trailing punctuation per token, splits on
/// whitespace. No stemming. Tokens that are all punctuation vanish.
inline std::vector<std::string> normalize_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t begin = i, end = j;
    while (begin < end && std::ispunct(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(text[end - 1]))) --end;
    if (begin < end) {
      std::string tok = text.substr(begin, end - begin);
      for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double rate() const {
    return static_cast<double>(errors()) / static_cast<double>(ref_len);
  }
};

/// Unit-cost Levenshtein alignment with backtrace, so the error counts are
/// attributable, not just the total.
inline WerBreakdown wer_alignment(const std::vector<std::string>& ref,
                                  const std::vector<std::string>& hyp) {
  if (ref.empty()) throw Error(ErrorCode::EmptyReference, "empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<unsigned>> d(n + 1, std::vector<unsigned>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<unsigned>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<unsigned>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const unsigned sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0u : 1u);
      d[i][j] = std::min({sub, d[i - 1][j] + 1u, d[i][j - 1] + 1u});
    }
  }
  WerBreakdown out;
  out.ref_len = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] && ref[i - 1] == hyp[j - 1]) {
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      ++out.substitutions, --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++out.deletions, --i;
    } else {
      ++out.insertions, --j;
    }
  }
  return out;
}

inline double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return wer_alignment(ref, hyp).rate();
}

inline double wer(const std::string& reference, const std::string& hypothesis) {
  return wer(normalize_tokens(reference), normalize_tokens(hypothesis));
}

struct WerStats {
  std::vector<double> per_utterance;
  double mean = 0.0;
  double std_dev = 0.0;  // population
  double median = 0.0;
  double p75_truncated_mean = 0.0;
  std::size_t count() const { return per_utterance.size(); }
};

namespace detail {

inline double median_of_sorted(const std::vector<double>& v) {
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Mean, population std, average-of-two median, and the mean of the
/// smallest ceil(0.75 n) values after an ascending sort.
inline WerStats wer_stats(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::EmptyList, "no WER values");
  WerStats s;
  s.per_utterance = values;
  const double n = static_cast<double>(values.size());
  double sum = 0.0, sq = 0.0;
  for (double v : values) {
    sum += v;
    sq += v * v;
  }
  s.mean = sum / n;
  s.std_dev = std::sqrt(std::max(sq / n - s.mean * s.mean, 0.0));

  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  s.median = detail::median_of_sorted(sorted);

  const std::size_t keep =
      static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(sorted.size())));
  double tsum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) tsum += sorted[i];
  s.p75_truncated_mean = tsum / static_cast<double>(keep);
  return s;
}

/// The privacy/utility trade-off: WER before and after conversion, attacker
/// SID accuracy before and after, and the Δ utility constraint. A partial
/// report means transcription was unavailable; the SID halves are still
/// valid but the WER halves are empty and the constraint is unmet.
struct TradeoffReport {
  WerStats wer_original;
  WerStats wer_converted;
  double sid_original = 0.0;
  double sid_converted = 0.0;
  double delta = 0.0;
  bool constraint_met = false;
  bool partial = false;
};

/// |E[converted] - E[original]| <= delta, with E summarized by the mean.
inline bool check_delta(const TradeoffReport& report) {
  return std::abs(report.wer_converted.mean - report.wer_original.mean) <= report.delta;
}

struct LatencyRecord {
  std::string utterance_id;
  double utterance_duration = 0.0;  // seconds
  double sid_time = 0.0;            // seconds, median over repeats
  double conversion_time = 0.0;     // seconds, median over repeats
  double rtf = 0.0;                 // conversion_time / utterance_duration
};

/// Times each clip through the given SID and conversion stages. Per clip,
/// each stage runs `repeats` measured times after one unmeasured warm-up;
/// the record keeps the median. Stage callables take the clip.
template <typename SidFn, typename ConvFn>
std::vector<LatencyRecord> bench_latency(SidFn&& run_sid, ConvFn&& run_conversion,
                                         const std::vector<AudioClip>& clips, int repeats) {
  if (repeats < 3) throw Error(ErrorCode::ConfigInvalid, "repeats must be >= 3");
  using clock = std::chrono::steady_clock;
  auto time_once = [](auto&& fn, const AudioClip& clip) {
    const auto t0 = clock::now();
    fn(clip);
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  std::vector<LatencyRecord> records;
  records.reserve(clips.size());
  for (const AudioClip& clip : clips) {
    LatencyRecord rec;
    rec.utterance_id = clip.id;
    rec.utterance_duration = clip.duration_seconds();
    std::vector<double> sid_times, conv_times;
    run_sid(clip);         // warm-up, excluded
    run_conversion(clip);  // warm-up, excluded
    for (int r = 0; r < repeats; ++r) {
      sid_times.push_back(time_once(run_sid, clip));
      conv_times.push_back(time_once(run_conversion, clip));
    }
    std::sort(sid_times.begin(), sid_times.end());
    std::sort(conv_times.begin(), conv_times.end());
    rec.sid_time = detail::median_of_sorted(sid_times);
    rec.conversion_time = detail::median_of_sorted(conv_times);
    rec.rtf = rec.utterance_duration > 0.0 ? rec.conversion_time / rec.utterance_duration
                                           : 0.0;
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::string latency_csv(const std::vector<LatencyRecord>& records) {
  std::string out = "duration,sid_time,conversion_time,rtf\n";
  char buf[160];
  for (const LatencyRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f\n", r.utterance_duration,
                  r.sid_time, r.conversion_time, r.rtf);
    out += buf;
  }
  return out;
}

/// One labelled test utterance.
struct EvalItem {
  AudioClip clip;
  std::string transcript;
  std::string speaker_id;
};

/// Runs the full loop over a held-out test set: per utterance, identify,
/// select a target, convert, transcribe both channels, then aggregate WER
/// stats, both attacker SID accuracies, and the Δ check. The attacker is
/// `registry` itself, trained on original voices. If the transcription
/// client reports itself unavailable (or times out), the report comes back
/// partial: SID numbers stand, WER halves stay empty.
inline TradeoffReport run_tradeoff(const SpeakerRegistry& registry,
                                   const ConversionRegistry& conversions,
                                   SelectionPolicy& policy,
                                   const std::vector<EvalItem>& test_set,
                                   TranscriptionClient& asr, double delta,
                                   const FeatureConfig& feat_cfg = {},
                                   const AnalysisConfig& analysis_cfg = {},
                                   const std::vector<std::string>& context = {}) {
  if (test_set.empty()) throw Error(ErrorCode::EmptyList, "empty test set");

  TradeoffReport report;
  report.delta = delta;

  std::vector<double> wer_orig, wer_conv;
  std::size_t sid_orig_correct = 0, sid_conv_correct = 0;
  bool asr_up = true;

  auto top_transcript = [&](const AudioClip& clip) -> std::string {
    const std::vector<Hypothesis> hyps = asr.transcribe(clip, context);
    return hyps.empty() ? std::string() : hyps.front().transcript;
  };

  for (const EvalItem& item : test_set) {
    const FeatureMatrix feats = extract_features(item.clip, feat_cfg);
    if (registry.identify(feats).speaker == item.speaker_id) ++sid_orig_correct;

    const SelectionDecision decision = select(policy, registry, feats, item.clip.id);
    AudioClip converted =
        convert(item.clip, conversions.get(decision.source_id, decision.target_id),
                analysis_cfg);
    converted.id = converted_id(item.clip.id);

    const FeatureMatrix conv_feats = extract_features(converted, feat_cfg);
    if (registry.identify(conv_feats).speaker == item.speaker_id) ++sid_conv_correct;

    if (!asr_up) continue;
    try {
      wer_orig.push_back(wer(item.transcript, top_transcript(item.clip)));
      wer_conv.push_back(wer(item.transcript, top_transcript(converted)));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::AsrUnavailable ||
          e.code() == ErrorCode::TranscriptionTimeout) {
        asr_up = false;  // keep scoring SID, stop asking for transcripts
      } else {
        throw;
      }
    }
  }

  const double n = static_cast<double>(test_set.size());
  report.sid_original = static_cast<double>(sid_orig_correct) / n;
  report.sid_converted = static_cast<double>(sid_conv_correct) / n;
  report.partial = !asr_up;
  if (!report.partial && !wer_orig.empty()) {
    report.wer_original = wer_stats(wer_orig);
    report.wer_converted = wer_stats(wer_conv);
    report.constraint_met = check_delta(report);
  }
  return report;
}

// --- serialization ---

inline nlohmann::json wer_stats_json(const WerStats& s) {
  return nlohmann::json{{"mean", s.mean},
                        {"std", s.std_dev},
                        {"median", s.median},
                        {"p75_truncated_mean", s.p75_truncated_mean},
                        {"count", s.count()},
                        {"per_utterance", s.per_utterance}};
}

inline nlohmann::json tradeoff_report_json(const TradeoffReport& r) {
  return nlohmann::json{{"wer_original", wer_stats_json(r.wer_original)},
                        {"wer_converted", wer_stats_json(r.wer_converted)},
                        {"sid_original", r.sid_original},
                        {"sid_converted", r.sid_converted},
                        {"delta", r.delta},
                        {"constraint_met", r.constraint_met},
                        {"partial", r.partial}};
}

}  // namespace vp
