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

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vp/audio.hpp"
#include "vp/error.hpp"
#include "vp/rng.hpp"

namespace vp {

/// Clip ids gain this suffix when they pass through conversion, so stub
/// transcribers can tell the two channels apart without seeing the waveform.
inline constexpr const char* kConvertedIdSuffix = "#conv";

inline std::string converted_id(const std::string& utterance_id) {
  return utterance_id + kConvertedIdSuffix;
}

inline bool is_converted_id(const std::string& id) {
  const std::string suffix = kConvertedIdSuffix;
  return id.size() >= suffix.size() &&
         id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string base_utterance_id(const std::string& id) {
  if (!is_converted_id(id)) return id;
  return id.substr(0, id.size() - std::string(kConvertedIdSuffix).size());
}

struct Hypothesis {
  std::string transcript;
  double confidence = 0.0;
};

/// Speech-to-text contract. Context phrases bias recognition toward an
/// expected command list; implementations return hypotheses ranked by
/// confidence, best first.
class TranscriptionClient {
 public:
  virtual ~TranscriptionClient() = default;
  virtual std::vector<Hypothesis> transcribe(const AudioClip& clip,
                                             const std::vector<std::string>& context) = 0;
  virtual std::string name() const = 0;
};

/// Returns the reference transcript for the clip's utterance id, converted
/// or not. The zero-WER baseline for pipeline tests.
class IdentityStubClient final : public TranscriptionClient {
 public:
  explicit IdentityStubClient(std::map<std::string, std::string> transcripts)
      : transcripts_(std::move(transcripts)) {}

  std::vector<Hypothesis> transcribe(const AudioClip& clip,
                                     const std::vector<std::string>&) override {
    auto it = transcripts_.find(base_utterance_id(clip.id));
    if (it == transcripts_.end()) {
      throw Error(ErrorCode::ConfigInvalid, "no transcript for utterance " + clip.id);
    }
    return {{it->second, 1.0}};
  }

  std::string name() const override { return "identity-stub"; }

 private:
  std::map<std::string, std::string> transcripts_;
};

/// Drops each reference token independently with probability `rate`,
/// simulating a recognizer that degrades on converted speech. The draw is
/// keyed by (seed, utterance id, token index), so results do not depend on
/// call order. With converted_only set, original-channel clips transcribe
/// perfectly and the WER gap between channels estimates `rate`.
class DeletionStubClient final : public TranscriptionClient {
 public:
  DeletionStubClient(std::map<std::string, std::string> transcripts, double rate,
                     std::uint64_t seed, bool converted_only = true)
      : transcripts_(std::move(transcripts)),
        rate_(rate),
        seed_(seed),
        converted_only_(converted_only) {
    if (!(rate >= 0.0 && rate <= 1.0)) {
      throw Error(ErrorCode::ConfigInvalid, "deletion rate must lie in [0, 1]");
    }
  }

  std::vector<Hypothesis> transcribe(const AudioClip& clip,
                                     const std::vector<std::string>&) override {
    const std::string base = base_utterance_id(clip.id);
    auto it = transcripts_.find(base);
    if (it == transcripts_.end()) {
      throw Error(ErrorCode::ConfigInvalid, "no transcript for utterance " + clip.id);
    }
    if (converted_only_ && !is_converted_id(clip.id)) return {{it->second, 1.0}};

    CounterRng rng(seed_ ^ hash_key(base));
    std::istringstream in(it->second);
    std::string token, out;
    while (in >> token) {
      if (rng.next_double() < rate_) continue;
      if (!out.empty()) out += ' ';
      out += token;
    }
    return {{out, 1.0 - rate_}};
  }

  std::string name() const override { return "deletion-stub"; }

 private:
  std::map<std::string, std::string> transcripts_;
  double rate_;
  std::uint64_t seed_;
  bool converted_only_;
};

}  // namespace vp
