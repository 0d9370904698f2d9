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
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vp/error.hpp"
#include "vp/features.hpp"
#include "vp/gmm.hpp"
#include "vp/ioutil.hpp"

namespace vp {

enum class ScoreMode {
  llr,     // mean log-likelihood ratio against the UBM
  loglik,  // raw mean log-likelihood, no UBM required
};

struct SidScore {
  std::string speaker_id;
  double llr = 0.0;
};

struct IdentificationResult {
  std::string speaker;                // top-ranked id
  double score = 0.0;                 // winning score
  std::vector<SidScore> scores;       // every candidate, descending score
};

/// UBM plus MAP-adapted per-speaker models.
class SpeakerRegistry {
 public:
  static constexpr double kDefaultRelevance = 16.0;

  void set_ubm(Gmm ubm) { ubm_ = std::move(ubm); has_ubm_ = true; }
  bool has_ubm() const { return has_ubm_; }
  const Gmm& ubm() const {
    if (!has_ubm_) throw Error(ErrorCode::EmptyRegistry, "no UBM set");
    return ubm_;
  }

  /// MAP-adapts the UBM toward the speaker's features and stores the model.
  void enroll(const std::string& speaker, const FeatureMatrix& features,
              double relevance = kDefaultRelevance) {
    if (!has_ubm_) throw Error(ErrorCode::EmptyRegistry, "enroll requires a UBM");
    if (models_.count(speaker)) {
      throw Error(ErrorCode::DuplicateSpeaker, "speaker already enrolled: " + speaker);
    }
    models_.emplace(speaker, map_adapt(ubm_, features, relevance));
  }

  /// Stores an externally trained model (e.g. loaded from disk).
  void add_model(const std::string& speaker, Gmm model) {
    if (speaker.empty()) throw Error(ErrorCode::ConfigInvalid, "empty speaker id");
    if (models_.count(speaker)) {
      throw Error(ErrorCode::DuplicateSpeaker, "speaker already enrolled: " + speaker);
    }
    if (has_ubm_ && (model.fingerprint != ubm_.fingerprint ||
                     model.components() != ubm_.components())) {
      throw Error(ErrorCode::FingerprintMismatch,
                  "model for " + speaker + " does not match the UBM");
    }
    models_.emplace(speaker, std::move(model));
  }

  bool has_speaker(const std::string& speaker) const { return models_.count(speaker) > 0; }

  const Gmm& model(const std::string& speaker) const {
    auto it = models_.find(speaker);
    if (it == models_.end()) {
      throw Error(ErrorCode::ConfigInvalid, "unknown speaker: " + speaker);
    }
    return it->second;
  }

  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    out.reserve(models_.size());
    for (const auto& [id, m] : models_) out.push_back(id);
    return out;  // std::map keeps these sorted
  }

  std::size_t size() const { return models_.size(); }

  /// Scores the utterance against every candidate (all speakers when `pool`
  /// is empty) and ranks by score descending, ties broken by lexicographic
  /// id. The top entry is the identification decision.
  IdentificationResult identify(const FeatureMatrix& features,
                                const std::vector<std::string>& pool = {},
                                ScoreMode mode = ScoreMode::llr) const {
    if (models_.empty()) throw Error(ErrorCode::EmptyRegistry, "no speakers enrolled");
    std::vector<std::string> candidates = pool.empty() ? speakers() : pool;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (const auto& id : candidates) {
      if (!models_.count(id)) {
        throw Error(ErrorCode::ConfigInvalid, "pool references unknown speaker: " + id);
      }
    }
    if (candidates.empty()) throw Error(ErrorCode::EmptyRegistry, "empty candidate pool");

    double ubm_ll = 0.0;
    if (mode == ScoreMode::llr) {
      if (!has_ubm_) throw Error(ErrorCode::EmptyRegistry, "LLR scoring requires a UBM");
      ubm_ll = log_likelihood(ubm_, features);
    }

    IdentificationResult result;
    for (const auto& id : candidates) {
      double s = log_likelihood(models_.at(id), features);
      if (mode == ScoreMode::llr) s -= ubm_ll;
      result.scores.push_back({id, s});
    }
    std::stable_sort(result.scores.begin(), result.scores.end(),
                     [](const SidScore& a, const SidScore& b) {
                       if (a.llr != b.llr) return a.llr > b.llr;
                       return a.speaker_id < b.speaker_id;
                     });
    result.speaker = result.scores.front().speaker_id;
    result.score = result.scores.front().llr;
    return result;
  }

 private:
  Gmm ubm_;
  bool has_ubm_ = false;
  std::map<std::string, Gmm> models_;
};

struct LabelledFeatures {
  std::string speaker;
  FeatureMatrix features;
};

struct SidEvaluation {
  double accuracy = 0.0;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::vector<std::string> labels;  // row/col order of the confusion matrix
  Matrix confusion;                 // true x predicted counts
};

/// Closed-set evaluation: every item is identified against the full registry.
inline SidEvaluation evaluate_sid(const SpeakerRegistry& registry,
                                  const std::vector<LabelledFeatures>& items,
                                  ScoreMode mode = ScoreMode::llr) {
  if (items.empty()) throw Error(ErrorCode::EmptyList, "no evaluation items");
  SidEvaluation report;
  report.labels = registry.speakers();
  report.confusion = Matrix(report.labels.size(), report.labels.size(), 0.0);

  auto index_of = [&](const std::string& id) {
    auto it = std::lower_bound(report.labels.begin(), report.labels.end(), id);
    if (it == report.labels.end() || *it != id) {
      throw Error(ErrorCode::ConfigInvalid, "label not enrolled: " + id);
    }
    return static_cast<std::size_t>(it - report.labels.begin());
  };

  for (const auto& item : items) {
    const std::size_t t = index_of(item.speaker);
    const IdentificationResult r = registry.identify(item.features, {}, mode);
    const std::size_t p = index_of(r.speaker);
    report.confusion(t, p) += 1.0;
    if (t == p) ++report.correct;
    ++report.total;
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  return report;
}

// --- directory persistence ---

/// Writes ubm.json, one model JSON per speaker, and a manifest.json listing
/// the ids.
inline void save_registry(const SpeakerRegistry& registry,
                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());

  nlohmann::json manifest{{"format", "VPSIDDIR1"},
                          {"speakers", nlohmann::json::object()}};
  if (registry.has_ubm()) {
    save_gmm(registry.ubm(), dir / "ubm.json");
    manifest["ubm"] = "ubm.json";
  }
  std::vector<std::string> taken;
  for (const auto& id : registry.speakers()) {
    std::string rel = "spk_" + detail::sanitize_filename(id) + ".json";
    while (std::find(taken.begin(), taken.end(), rel) != taken.end()) {
      rel.insert(rel.size() - 5, "_");  // distinct ids may sanitize identically
    }
    taken.push_back(rel);
    save_gmm(registry.model(id), dir / rel);
    manifest["speakers"][id] = rel;
  }
  detail::write_json_file(manifest, dir / "manifest.json");
}

inline SpeakerRegistry load_registry(const std::filesystem::path& dir) {
  const nlohmann::json manifest = detail::read_json_file(dir / "manifest.json");
  if (manifest.value("format", "") != "VPSIDDIR1") {
    throw Error(ErrorCode::ModelFormatInvalid, "expected VPSIDDIR1 manifest");
  }
  SpeakerRegistry registry;
  if (manifest.contains("ubm")) {
    registry.set_ubm(load_gmm(dir / manifest["ubm"].get<std::string>()));
  }
  for (const auto& [id, rel] : manifest.at("speakers").items()) {
    registry.add_model(id, load_gmm(dir / rel.get<std::string>()));
  }
  detail::registry_load_count()++;
  return registry;
}

}  // namespace vp
