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

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "vp/audio.hpp"
#include "vp/conversion.hpp"
#include "vp/error.hpp"
#include "vp/eval.hpp"
#include "vp/features.hpp"
#include "vp/gmm.hpp"
#include "vp/http_asr.hpp"
#include "vp/manifest.hpp"
#include "vp/selection.hpp"
#include "vp/sid.hpp"
#include "vp/transcribe.hpp"

namespace vp {

struct PipelineConfig {
  std::filesystem::path sid_registry_dir;
  std::filesystem::path conversion_registry_dir;
  SelectionPolicy policy;
  FeatureConfig features;
  AnalysisConfig analysis;
  std::string asr_host;  // empty disables the transcription stage
  int asr_port = 0;
  std::string asr_path = "/transcribe";
  double latency_budget_s = 10.0;
  std::vector<std::string> context_phrases;
};

/// Outcome of one utterance through the device path. An empty `error` means
/// the utterance was converted and (if the stage is on) forwarded; a
/// transcription error still carries the converted clip. Conversion errors
/// drop the utterance: nothing is ever forwarded unconverted.
struct UtteranceResult {
  std::string utterance_id;
  bool converted = false;
  SelectionDecision decision;  // valid iff converted
  AudioClip converted_clip;    // id carries the converted suffix
  std::vector<Hypothesis> hypotheses;
  LatencyRecord timings;
  double transcription_time = 0.0;  // seconds
  double total_time = 0.0;          // seconds, end to end
  std::string error;

  bool ok() const { return error.empty(); }
};

struct BatchSummary {
  std::size_t processed = 0;
  std::size_t failed = 0;
  double audio_seconds = 0.0;
  double sid_seconds = 0.0;
  double conversion_seconds = 0.0;
  double transcription_seconds = 0.0;
  std::vector<SelectionDecision> decisions;  // audit stream, input order
};

/// The runtime unit: models load once at construction and are reused for
/// every utterance. Safe to share across threads; the selection stream is
/// the only serialized section.
class Pipeline {
 public:
  /// Loads both registries from disk; wires an HTTP transcriber when an
  /// endpoint is configured.
  explicit Pipeline(const PipelineConfig& cfg)
      : Pipeline(load_registry(cfg.sid_registry_dir),
                 load_conversion_registry(cfg.conversion_registry_dir), cfg) {
    if (!cfg.asr_host.empty()) {
      transcriber_ = std::make_shared<HttpTranscriptionClient>(
          cfg.asr_host, cfg.asr_port, cfg.latency_budget_s, cfg.asr_path);
    }
  }

  /// In-memory variant for tests and train-then-run flows.
  Pipeline(SpeakerRegistry sid, ConversionRegistry conversions, PipelineConfig cfg,
           std::shared_ptr<TranscriptionClient> transcriber = nullptr)
      : cfg_(std::move(cfg)),
        sid_(std::move(sid)),
        conversions_(std::move(conversions)),
        policy_(cfg_.policy),
        transcriber_(std::move(transcriber)) {
    if (!(cfg_.latency_budget_s > 0.0)) {
      throw Error(ErrorCode::ConfigInvalid, "latency budget must be positive");
    }
    validate_policy(policy_, sid_);
    for (const std::string& source : policy_.source_pool) {
      for (const std::string& target : detail::sorted_unique(policy_.target_pool)) {
        if (source != target && !conversions_.has(source, target)) {
          throw Error(ErrorCode::ConfigInvalid,
                      "no conversion model for " + source + "->" + target);
        }
      }
    }
  }

  void set_transcriber(std::shared_ptr<TranscriptionClient> transcriber) {
    transcriber_ = std::move(transcriber);
  }

  const SpeakerRegistry& sid() const { return sid_; }
  const ConversionRegistry& conversions() const { return conversions_; }
  const PipelineConfig& config() const { return cfg_; }

  std::vector<SelectionDecision> audit_trail() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return audit_;
  }

  UtteranceResult process(const AudioClip& clip) {
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    auto seconds_since = [](clock::time_point t0) {
      return std::chrono::duration<double>(clock::now() - t0).count();
    };

    UtteranceResult r;
    r.utterance_id = clip.id;
    r.timings.utterance_id = clip.id;
    r.timings.utterance_duration = clip.duration_seconds();

    try {
      const auto sid_t0 = clock::now();
      const FeatureMatrix feats = extract_features(clip, cfg_.features);
      SelectionDecision decision;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        decision = select(policy_, sid_, feats, clip.id);
        audit_.push_back(decision);
      }
      r.timings.sid_time = seconds_since(sid_t0);

      const auto conv_t0 = clock::now();
      AudioClip converted =
          convert(clip, conversions_.get(decision.source_id, decision.target_id),
                  cfg_.analysis);
      converted.id = converted_id(clip.id);
      r.timings.conversion_time = seconds_since(conv_t0);
      r.timings.rtf = r.timings.utterance_duration > 0.0
                          ? r.timings.conversion_time / r.timings.utterance_duration
                          : 0.0;
      r.decision = std::move(decision);
      r.converted_clip = std::move(converted);
      r.converted = true;
    } catch (const Error& e) {
      r.error = e.what();  // dropped utterance, never forwarded raw
      r.total_time = seconds_since(started);
      return r;
    }

    if (transcriber_) {
      const auto asr_t0 = clock::now();
      try {
        // The forward channel: only the converted clip ever crosses here.
        r.hypotheses = transcriber_->transcribe(r.converted_clip, cfg_.context_phrases);
      } catch (const Error& e) {
        r.error = e.what();
      }
      r.transcription_time = seconds_since(asr_t0);
      if (r.error.empty() && r.transcription_time > cfg_.latency_budget_s) {
        r.error = std::string(error_code_name(ErrorCode::TranscriptionTimeout)) +
                  ": transcription took " + std::to_string(r.transcription_time) +
                  " s, budget " + std::to_string(cfg_.latency_budget_s) + " s";
      }
    }
    r.total_time = seconds_since(started);
    return r;
  }

  /// Per-row process with error isolation: a bad file yields an error
  /// result and the batch continues. Results keep manifest order.
  std::pair<std::vector<UtteranceResult>, BatchSummary> process_batch(
      const std::vector<ManifestEntry>& rows) {
    std::vector<UtteranceResult> results;
    BatchSummary summary;
    results.reserve(rows.size());
    for (const ManifestEntry& row : rows) {
      UtteranceResult r;
      try {
        AudioClip clip = load_wav(row.path);
        clip.id = row.utterance_id();
        r = process(clip);
      } catch (const Error& e) {
        r.utterance_id = row.utterance_id();
        r.error = e.what();
      }
      summary.processed += 1;
      if (r.ok()) {
        summary.audio_seconds += r.timings.utterance_duration;
        summary.sid_seconds += r.timings.sid_time;
        summary.conversion_seconds += r.timings.conversion_time;
        summary.transcription_seconds += r.transcription_time;
      } else {
        summary.failed += 1;
      }
      if (r.converted) summary.decisions.push_back(r.decision);
      results.push_back(std::move(r));
    }
    return {std::move(results), std::move(summary)};
  }

 private:
  PipelineConfig cfg_;
  SpeakerRegistry sid_;
  ConversionRegistry conversions_;
  SelectionPolicy policy_;
  std::shared_ptr<TranscriptionClient> transcriber_;
  mutable std::mutex mutex_;
  std::vector<SelectionDecision> audit_;
};

// --- training driver shared by the CLI and tests ---

struct TrainConfig {
  EmConfig ubm;  // components/seed/iterations for the background model
  double relevance = 16.0;
  FeatureConfig features;
  AnalysisConfig analysis;
  double min_voiced_s = 10.0;
};

struct TrainedModels {
  SpeakerRegistry sid;
  std::vector<VoiceProfile> profiles;  // warp coordinates already fitted
  ConversionRegistry conversions;
};

/// Two independent model-building passes over the same clips: GMM-UBM
/// speaker models for identification, voice profiles + pairwise converters
/// for de-identification.
inline TrainedModels train_models(
    const std::map<std::string, std::vector<AudioClip>>& clips_by_speaker,
    const TrainConfig& cfg) {
  if (clips_by_speaker.size() < 2) {
    throw Error(ErrorCode::InsufficientVoicedData,
                "need at least two speakers, got " +
                    std::to_string(clips_by_speaker.size()));
  }

  std::map<std::string, FeatureMatrix> pooled;
  std::vector<FeatureMatrix> everything;
  for (const auto& [speaker, clips] : clips_by_speaker) {
    if (clips.empty()) {
      throw Error(ErrorCode::EmptyList, "no clips for speaker " + speaker);
    }
    std::vector<FeatureMatrix> parts;
    parts.reserve(clips.size());
    for (const AudioClip& clip : clips) parts.push_back(extract_features(clip, cfg.features));
    pooled.emplace(speaker, concat_features(parts));
    everything.push_back(pooled.at(speaker));
  }

  TrainedModels out;
  out.sid.set_ubm(fit_em(concat_features(everything), cfg.ubm).model);
  for (const auto& [speaker, feats] : pooled) {
    out.sid.enroll(speaker, feats, cfg.relevance);
  }

  out.profiles.reserve(clips_by_speaker.size());
  for (const auto& [speaker, clips] : clips_by_speaker) {
    out.profiles.push_back(build_profile(speaker, clips, cfg.analysis, cfg.min_voiced_s));
  }
  fit_warp_coordinates(out.profiles);
  for (const VoiceProfile& s : out.profiles) {
    for (const VoiceProfile& t : out.profiles) {
      if (s.speaker_id != t.speaker_id) out.conversions.add(train_converter(s, t));
    }
  }
  return out;
}

/// Groups manifest rows (already filtered to the training split) by speaker
/// and loads the audio.
inline std::map<std::string, std::vector<AudioClip>> load_training_clips(
    const std::vector<ManifestEntry>& rows) {
  std::map<std::string, std::vector<AudioClip>> by_speaker;
  for (const ManifestEntry& row : rows) {
    AudioClip clip = load_wav(row.path);
    clip.id = row.utterance_id();
    by_speaker[row.speaker].push_back(std::move(clip));
  }
  return by_speaker;
}

inline void save_models(const TrainedModels& models, const std::filesystem::path& dir) {
  save_registry(models.sid, dir / "sid");
  save_profiles(models.profiles, dir / "profiles");
  save_conversion_registry(models.conversions, dir / "conversion");
}

}  // namespace vp
