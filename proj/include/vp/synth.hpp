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
//
// Deterministic vowel-sequence speech synthesizer. Good enough to carry
// formants, pitch, and voicing for pipeline tests without shipping audio
// fixtures: every clip is a pure function of (speaker, seed).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "vp/audio.hpp"
#include "vp/error.hpp"
#include "vp/manifest.hpp"
#include "vp/rng.hpp"

namespace vp {

/// Speakers differ only in pitch and vocal-tract length (formant scale),
/// the two axes the converter transforms. Keeping every other cue shared
/// means a degraded converted-SID score measures conversion, not some
/// untouched channel artifact.
struct SyntheticSpeaker {
  std::string id;
  double f0 = 120.0;           // Hz, speaking average
  double formant_scale = 1.0;  // multiplies all vowel formants
};

namespace detail {

struct Vowel {
  std::array<double, 3> formants;
};

// Peterson-Barney style averages for /a e i o u/.
inline const std::array<Vowel, 5>& vowel_table() {
  static const std::array<Vowel, 5> table = {{
      {{730.0, 1090.0, 2440.0}},
      {{530.0, 1840.0, 2480.0}},
      {{270.0, 2290.0, 3010.0}},
      {{570.0, 840.0, 2410.0}},
      {{300.0, 870.0, 2240.0}},
  }};
  return table;
}

constexpr std::array<double, 3> kFormantBandwidths = {90.0, 110.0, 170.0};

/// In-place cascade of one digital resonator, unity gain at DC.
inline void resonate(std::vector<double>& x, double freq, double bandwidth, int sr) {
  const double r = std::exp(-std::numbers::pi * bandwidth / sr);
  const double theta = 2.0 * std::numbers::pi * freq / sr;
  const double a1 = 2.0 * r * std::cos(theta);
  const double a2 = -r * r;
  const double g = 1.0 - a1 - a2;
  double y1 = 0.0, y2 = 0.0;
  for (double& v : x) {
    const double y = g * v + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

inline const std::vector<std::string>& command_lexicon() {
  static const std::vector<std::string> words = {
      "go",     "back",   "to",     "the",    "beginning", "of",     "a",
      "video",  "play",   "pause",  "next",   "previous",  "stop",   "resume",
      "volume", "up",     "down",   "mute",   "unmute",    "repeat", "skip",
      "forward", "rewind", "open",  "close"};
  return words;
}

}  // namespace detail

/// One spoken "word" per vowel segment, separated by short silences.
/// Excitation is an impulse train with vibrato, declination, and per-period
/// jitter; the tract is three cascaded resonators at scaled vowel formants.
inline AudioClip synth_utterance(const SyntheticSpeaker& spk, std::uint64_t seed,
                                 int num_words, int sample_rate = 16000) {
  if (num_words < 1) throw Error(ErrorCode::ConfigInvalid, "need at least one word");
  if (sample_rate < 8000) throw Error(ErrorCode::ConfigInvalid, "sample rate too low");

  CounterRng rng(seed ^ hash_key(spk.id));
  const int gap = sample_rate * 45 / 1000;
  const int lead = sample_rate * 50 / 1000;

  std::vector<double> y(lead, 0.0);
  const double utt_f0 = spk.f0 * (0.97 + 0.06 * rng.next_double());

  // Total voiced samples, for the declination ramp.
  std::vector<int> word_len(num_words);
  std::vector<std::size_t> word_vowel(num_words);
  std::vector<double> word_amp(num_words);
  double total_voiced = 0.0;
  for (int w = 0; w < num_words; ++w) {
    const double dur = 0.25 + 0.15 * rng.next_double();
    word_len[w] = static_cast<int>(dur * sample_rate);
    word_vowel[w] = rng.next_below(detail::vowel_table().size());
    word_amp[w] = 0.8 + 0.4 * rng.next_double();
    total_voiced += word_len[w];
  }

  double voiced_pos = 0.0;
  for (int w = 0; w < num_words; ++w) {
    const int n = word_len[w];
    const detail::Vowel& vowel = detail::vowel_table()[word_vowel[w]];

    std::vector<double> seg(n, 0.0);
    double t = 2.0;
    while (t < n) {
      const double progress = (voiced_pos + t) / total_voiced;
      const double declination = 1.05 - 0.10 * progress;
      const double vibrato =
          1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * 5.5 * (voiced_pos + t) /
                                sample_rate);
      const double f0 = utt_f0 * declination * vibrato;
      seg[static_cast<std::size_t>(t)] = word_amp[w] * (0.95 + 0.1 * rng.next_double());
      const double jitter = 0.99 + 0.02 * rng.next_double();
      t += jitter * sample_rate / f0;
    }
    for (std::size_t k = 0; k < vowel.formants.size(); ++k) {
      detail::resonate(seg, vowel.formants[k] * spk.formant_scale,
                       detail::kFormantBandwidths[k], sample_rate);
    }
    const int fade = std::min(sample_rate * 5 / 1000, n / 2);
    for (int i = 0; i < fade; ++i) {
      const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
      seg[i] *= g;
      seg[n - 1 - i] *= g;
    }
    y.insert(y.end(), seg.begin(), seg.end());
    y.insert(y.end(), gap, 0.0);
    voiced_pos += n;
  }
  y.insert(y.end(), lead - gap > 0 ? lead - gap : 0, 0.0);

  double sq = 0.0;
  for (double v : y) sq += v * v;
  const double scale = sq > 0.0 ? 0.1 / std::sqrt(sq / y.size()) : 1.0;

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double noise = 0.002 * (2.0 * rng.next_double() - 1.0);
    clip.samples[i] = static_cast<float>(std::clamp(y[i] * scale + noise, -1.0, 1.0));
  }
  return clip;
}

inline std::string synth_transcript(std::uint64_t seed, int num_words) {
  const std::vector<std::string>& lex = detail::command_lexicon();
  CounterRng rng(seed);
  std::string out;
  for (int w = 0; w < num_words; ++w) {
    if (!out.empty()) out += ' ';
    out += lex[rng.next_below(lex.size())];
  }
  return out;
}

/// Pitch and tract-length spread roughly covering adult voices. The first
/// five are maximally separated, matching the five-speaker studies most
/// tests run.
inline std::vector<SyntheticSpeaker> default_speaker_bank(std::size_t n) {
  static const std::vector<SyntheticSpeaker> bank = {
      {"spk00", 100.0, 1.22}, {"spk01", 292.0, 0.82}, {"spk02", 132.0, 1.12},
      {"spk03", 224.0, 0.94}, {"spk04", 171.0, 1.03}, {"spk05", 116.0, 1.17},
      {"spk06", 255.0, 0.88}, {"spk07", 150.0, 1.08}, {"spk08", 196.0, 0.98},
      {"spk09", 330.0, 0.85},
  };
  if (n == 0 || n > bank.size()) {
    throw Error(ErrorCode::ConfigInvalid, "bank holds 1 to " + std::to_string(bank.size()) +
                                              " speakers");
  }
  return {bank.begin(), bank.begin() + static_cast<std::ptrdiff_t>(n)};
}

struct SynthUtterance {
  AudioClip clip;
  std::string speaker;
  std::string transcript;
  std::string split;
};

/// Seeded corpus: per speaker, `per_speaker` utterances of 3 to 8 words
/// with a seeded 70/30 train/test split (rounded up toward train).
inline std::vector<SynthUtterance> make_corpus(const std::vector<SyntheticSpeaker>& bank,
                                               int per_speaker, std::uint64_t seed,
                                               int sample_rate = 16000,
                                               double train_fraction = 0.7) {
  if (bank.empty()) throw Error(ErrorCode::EmptyList, "no speakers");
  if (per_speaker < 1) throw Error(ErrorCode::ConfigInvalid, "per_speaker must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "train_fraction must lie in (0, 1]");
  }

  std::vector<SynthUtterance> out;
  for (const SyntheticSpeaker& spk : bank) {
    CounterRng split_rng(seed ^ hash_key(spk.id + "/split"));
    std::vector<int> order(per_speaker);
    for (int i = 0; i < per_speaker; ++i) order[i] = i;
    for (int i = per_speaker - 1; i > 0; --i) {
      std::swap(order[i], order[split_rng.next_below(static_cast<std::uint64_t>(i) + 1)]);
    }
    const int train_count = static_cast<int>(
        std::ceil(train_fraction * static_cast<double>(per_speaker)));
    std::vector<bool> is_train(per_speaker, false);
    for (int i = 0; i < train_count; ++i) is_train[order[i]] = true;

    for (int u = 0; u < per_speaker; ++u) {
      const std::uint64_t utt_seed = seed ^ hash_key(spk.id) ^ (0x9e3779b9ull * (u + 1));
      CounterRng words_rng(utt_seed ^ 0x77ccull);
      const int words = 3 + static_cast<int>(words_rng.next_below(6));

      SynthUtterance item;
      item.clip = synth_utterance(spk, utt_seed, words, sample_rate);
      char idx[16];
      std::snprintf(idx, sizeof(idx), "%03d", u);
      item.clip.id = spk.id + "_u" + idx;
      item.speaker = spk.id;
      item.transcript = synth_transcript(utt_seed ^ 0xabcdull, words);
      item.split = is_train[u] ? "train" : "test";
      out.push_back(std::move(item));
    }
  }
  return out;
}

/// Writes wav/<utterance>.wav files plus manifest.csv; returns the
/// manifest path.
inline std::filesystem::path write_corpus(const std::vector<SynthUtterance>& items,
                                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "wav", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  std::vector<ManifestEntry> entries;
  for (const SynthUtterance& item : items) {
    const std::filesystem::path rel = std::filesystem::path("wav") / (item.clip.id + ".wav");
    save_wav(item.clip, dir / rel);
    ManifestEntry e;
    e.path = rel;
    e.speaker = item.speaker;
    e.transcript = item.transcript;
    e.split = item.split;
    entries.push_back(std::move(e));
  }
  const std::filesystem::path manifest_path = dir / "manifest.csv";
  write_manifest(entries, manifest_path);
  return manifest_path;
}

}  // namespace vp
