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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vp/error.hpp"
#include "vp/features.hpp"
#include "vp/ioutil.hpp"
#include "vp/rng.hpp"
#include "vp/sid.hpp"

namespace vp {

/// Hybrid selection policy: deterministic closest-source mapping over
/// source_pool, uniform random target from target_pool minus the source.
/// rng_state is the next draw ordinal; it advances exactly once per
/// selection, so the decision stream is an auditable function of
/// (rng_seed, ordinal).
struct SelectionPolicy {
  std::vector<std::string> source_pool;
  std::vector<std::string> target_pool;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_state = 0;
  // Top scores below the floor are flagged, never rejected: unseen speakers
  // still map to their closest enrolled voice.
  double confidence_floor = -std::numeric_limits<double>::infinity();
};

struct SelectionDecision {
  std::string utterance_id;
  std::string source_id;
  std::string target_id;
  std::vector<SidScore> source_scores;  // ranked, best first
  std::uint64_t draw_index = 0;         // RNG draw ordinal
  bool low_confidence = false;
};

namespace detail {

inline std::vector<std::string> sorted_unique(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace detail

/// Pools must be non-empty subsets of the enrolled speakers.
inline void validate_policy(const SelectionPolicy& policy, const SpeakerRegistry& registry) {
  if (policy.source_pool.empty() || policy.target_pool.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "selection pools must be non-empty");
  }
  for (const auto* pool : {&policy.source_pool, &policy.target_pool}) {
    for (const std::string& id : *pool) {
      if (!registry.has_speaker(id)) {
        throw Error(ErrorCode::ConfigInvalid, "pool speaker not enrolled: " + id);
      }
    }
  }
}

/// Uniform draw from target_pool minus the source, keyed by
/// (rng_seed, ordinal) so any decision can be replayed from the audit log.
inline std::string draw_target(const SelectionPolicy& policy, const std::string& source_id,
                               std::uint64_t ordinal) {
  std::vector<std::string> pool = detail::sorted_unique(policy.target_pool);
  pool.erase(std::remove(pool.begin(), pool.end(), source_id), pool.end());
  if (pool.empty()) {
    throw Error(ErrorCode::EmptyEffectiveTargetPool,
                "target pool only contains the source: " + source_id);
  }
  const std::uint64_t draw = counter_draw(policy.rng_seed, ordinal);
  return pool[draw % pool.size()];
}

/// Maps the utterance to the closest source-pool speaker (ties break to the
/// lexicographically smallest id), then draws the target. Advances
/// policy.rng_state by one.
inline SelectionDecision select(SelectionPolicy& policy, const SpeakerRegistry& registry,
                                const FeatureMatrix& features,
                                const std::string& utterance_id = "") {
  validate_policy(policy, registry);
  const IdentificationResult sid = registry.identify(features, policy.source_pool);

  SelectionDecision d;
  d.utterance_id = utterance_id;
  d.source_id = sid.speaker;
  d.source_scores = sid.scores;
  d.low_confidence = sid.score < policy.confidence_floor;
  d.draw_index = policy.rng_state++;
  d.target_id = draw_target(policy, d.source_id, d.draw_index);
  return d;
}

// --- audit log: line-delimited JSON, no audio or features ---

struct AuditRecord {
  std::string utt;
  std::string source;
  std::string target;
  std::uint64_t ordinal = 0;
  bool low_confidence = false;
};

inline nlohmann::json audit_record_json(const SelectionDecision& d) {
  return nlohmann::json{{"utt", d.utterance_id},
                        {"source", d.source_id},
                        {"target", d.target_id},
                        {"ordinal", d.draw_index},
                        {"low_confidence", d.low_confidence}};
}

inline std::string audit_log(const std::vector<SelectionDecision>& decisions) {
  std::ostringstream out;
  for (const SelectionDecision& d : decisions) {
    out << audit_record_json(d).dump() << '\n';
  }
  return out.str();
}

inline void write_audit_log(const std::vector<SelectionDecision>& decisions,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << audit_log(decisions);
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

inline std::vector<AuditRecord> read_audit_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<AuditRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::ModelFormatInvalid, "bad audit line: " + line);
    }
    AuditRecord r;
    r.utt = j.value("utt", "");
    r.source = j.at("source").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.ordinal = j.at("ordinal").get<std::uint64_t>();
    r.low_confidence = j.value("low_confidence", false);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace vp
