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
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "vp/audio.hpp"
#include "vp/error.hpp"
#include "vp/transcribe.hpp"

namespace vp {

/// Speech-to-text over HTTP. The request is a multipart POST with an
/// "audio" part (WAV bytes) and a "context" part (JSON {context: [string]});
/// the response is JSON {hypotheses: [{transcript, confidence}]}.
class HttpTranscriptionClient final : public TranscriptionClient {
 public:
  HttpTranscriptionClient(std::string host, int port, double timeout_s = 10.0,
                          std::string path = "/transcribe")
      : host_(std::move(host)), port_(port), timeout_s_(timeout_s), path_(std::move(path)) {
    if (!(timeout_s_ > 0.0)) {
      throw Error(ErrorCode::ConfigInvalid, "timeout must be positive");
    }
  }

  std::vector<Hypothesis> transcribe(const AudioClip& clip,
                                     const std::vector<std::string>& context) override {
    httplib::Client cli(host_, port_);
    const time_t sec = static_cast<time_t>(timeout_s_);
    const time_t usec = static_cast<time_t>((timeout_s_ - sec) * 1e6);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);

    const nlohmann::json ctx{{"context", context}};
    httplib::MultipartFormDataItems items = {
        {"audio", wav_bytes(clip), "utterance.wav", "audio/wav"},
        {"context", ctx.dump(), "", "application/json"},
    };

    httplib::Result res = cli.Post(path_, items);
    if (!res) {
      switch (res.error()) {
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::Read:
        case httplib::Error::Write:
          throw Error(ErrorCode::TranscriptionTimeout,
                      "no response from " + endpoint() + " within " +
                          std::to_string(timeout_s_) + " s");
        default:
          throw Error(ErrorCode::AsrUnavailable,
                      endpoint() + ": " + httplib::to_string(res.error()));
      }
    }
    if (res->status != 200) {
      throw Error(ErrorCode::AsrUnavailable,
                  endpoint() + " returned status " + std::to_string(res->status));
    }
    return parse_response(res->body);
  }

  std::string name() const override { return "http:" + endpoint(); }

  std::string endpoint() const { return host_ + ":" + std::to_string(port_) + path_; }

 private:
  static std::vector<Hypothesis> parse_response(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::AsrUnavailable, "malformed transcription response");
    }
    if (!j.is_object() || !j.contains("hypotheses") || !j["hypotheses"].is_array()) {
      throw Error(ErrorCode::AsrUnavailable, "response lacks hypotheses array");
    }
    std::vector<Hypothesis> out;
    for (const auto& h : j["hypotheses"]) {
      // Services disagree on optional fields; a null or missing confidence
      // ranks last rather than failing the whole response.
      Hypothesis hyp;
      if (h.is_object()) {
        const auto t = h.find("transcript");
        if (t != h.end() && t->is_string()) hyp.transcript = t->get<std::string>();
        const auto c = h.find("confidence");
        if (c != h.end() && c->is_number()) hyp.confidence = c->get<double>();
      }
      if (!std::isfinite(hyp.confidence)) hyp.confidence = 0.0;
      out.push_back(std::move(hyp));
    }
    std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
      return a.confidence > b.confidence;
    });
    return out;
  }

  std::string host_;
  int port_;
  double timeout_s_;
  std::string path_;
};

}  // namespace vp
