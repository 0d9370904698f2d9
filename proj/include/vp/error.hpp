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

#include <stdexcept>
#include <string>

namespace vp {

enum class ErrorCode {
  IoFailure,
  NotWav,
  UnsupportedEncoding,
  MultiChannel,
  SampleRateMismatch,
  ConfigInvalid,
  FrameCountMismatch,
  FingerprintMismatch,
  TooFewFrames,
  DuplicateSpeaker,
  EmptyRegistry,
  SameSpeaker,
  InsufficientVoicedData,
  UnstableEnvelope,
  EmptyEffectiveTargetPool,
  EmptyReference,
  EmptyList,
  AsrUnavailable,
  TranscriptionTimeout,
  ManifestInvalid,
  ModelFormatInvalid,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NotWav: return "NotWav";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::MultiChannel: return "MultiChannel";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::DuplicateSpeaker: return "DuplicateSpeaker";
    case ErrorCode::EmptyRegistry: return "EmptyRegistry";
    case ErrorCode::SameSpeaker: return "SameSpeaker";
    case ErrorCode::InsufficientVoicedData: return "InsufficientVoicedData";
    case ErrorCode::UnstableEnvelope: return "UnstableEnvelope";
    case ErrorCode::EmptyEffectiveTargetPool: return "EmptyEffectiveTargetPool";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::AsrUnavailable: return "AsrUnavailable";
    case ErrorCode::TranscriptionTimeout: return "TranscriptionTimeout";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::ModelFormatInvalid: return "ModelFormatInvalid";
  }
  return "UnknownError";
}

/// Library-wide exception. `code()` identifies the contract violation so
/// callers can map failures to exit codes or recovery paths.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vp
