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

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vp/dsp.hpp"
#include "vp/error.hpp"
#include "vp/matrix.hpp"

namespace vp {

/// Mono PCM utterance, samples normalized to [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;
  std::string id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class Window { rectangular, hamming };

inline const char* window_name(Window w) {
  return w == Window::hamming ? "hamming" : "rectangular";
}

/// Overlapping (optionally windowed) frames cut from a clip.
/// num_frames = floor((N - frame_len)/hop) + 1 for N >= frame_len, else 0.
struct FrameSequence {
  Matrix frames;  // num_frames x frame_len
  int frame_len = 0;
  int hop = 0;
  Window window = Window::rectangular;

  std::size_t num_frames() const { return frames.rows(); }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Parses a RIFF/WAVE byte buffer. PCM format 1, 16-bit, mono only; anything
/// else is rejected rather than converted so corpus mistakes surface early.
inline AudioClip parse_wav(const std::vector<unsigned char>& bytes, const std::string& id) {
  using detail::read_u16le;
  using detail::read_u32le;

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::NotWav, "missing RIFF/WAVE magic: " + id);
  }

  bool have_fmt = false;
  std::uint16_t format_code = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data_ptr = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t size = read_u32le(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw Error(ErrorCode::NotWav, "truncated chunk in " + id);
    }
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::NotWav, "short fmt chunk in " + id);
      format_code = read_u16le(bytes.data() + body);
      channels = read_u16le(bytes.data() + body + 2);
      sample_rate = read_u32le(bytes.data() + body + 4);
      bits = read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data_ptr == nullptr) {
    throw Error(ErrorCode::NotWav, "missing fmt/data chunk in " + id);
  }
  if (format_code != 1 || bits != 16) {
    throw Error(ErrorCode::UnsupportedEncoding,
                "need 16-bit integer PCM (format 1), got format " + std::to_string(format_code) +
                    " at " + std::to_string(bits) + " bits: " + id);
  }
  if (channels != 1) {
    throw Error(ErrorCode::MultiChannel,
                std::to_string(channels) + " channels in " + id + "; mono required");
  }
  if (sample_rate == 0) throw Error(ErrorCode::NotWav, "zero sample rate in " + id);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.id = id;
  const std::size_t n = data_size / 2;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int16_t s = static_cast<std::int16_t>(
        static_cast<std::uint16_t>(data_ptr[2 * i] | (data_ptr[2 * i + 1] << 8)));
    clip.samples[i] = static_cast<float>(s) / 32768.0f;
  }
  return clip;
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed: " + path.string());
  return parse_wav(bytes, path.stem().string());
}

/// Serializes a clip as 16-bit PCM mono WAV bytes. Out-of-range samples
/// saturate instead of wrapping.
inline std::string wav_bytes(const AudioClip& clip) {
  using detail::put_u16le;
  using detail::put_u32le;

  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32le(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out += "data";
  put_u32le(out, data_size);
  for (float x : clip.samples) {
    long q = std::lround(static_cast<double>(x) * 32768.0);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

inline void save_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate <= 0) throw Error(ErrorCode::ConfigInvalid, "clip sample_rate must be > 0");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  const std::string bytes = wav_bytes(clip);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

/// Cuts a clip into overlapping frames. A clip shorter than one frame yields
/// an empty sequence.
inline FrameSequence frame(const AudioClip& clip, double frame_ms, double hop_ms,
                           Window window = Window::hamming) {
  if (!(frame_ms >= hop_ms && hop_ms > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "need frame_ms >= hop_ms > 0");
  }
  if (clip.sample_rate <= 0) throw Error(ErrorCode::ConfigInvalid, "clip sample_rate must be > 0");

  FrameSequence seq;
  seq.frame_len = static_cast<int>(std::lround(frame_ms * clip.sample_rate / 1000.0));
  seq.hop = static_cast<int>(std::lround(hop_ms * clip.sample_rate / 1000.0));
  if (seq.frame_len <= 0 || seq.hop <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "frame/hop too small for sample rate");
  }
  seq.window = window;

  const std::size_t n = clip.samples.size();
  const std::size_t flen = static_cast<std::size_t>(seq.frame_len);
  const std::size_t hop = static_cast<std::size_t>(seq.hop);
  const std::size_t count = n >= flen ? (n - flen) / hop + 1 : 0;

  seq.frames = Matrix(count, flen);
  std::vector<double> win(flen, 1.0);
  if (window == Window::hamming) {
    for (std::size_t i = 0; i < flen; ++i) win[i] = detail::hamming(i, flen);
  }
  for (std::size_t f = 0; f < count; ++f) {
    double* row = seq.frames.row(f);
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < flen; ++i) {
      row[i] = static_cast<double>(clip.samples[start + i]) * win[i];
    }
  }
  return seq;
}

/// First-order high-pass: y[0] = x[0]; y[n] = x[n] - coeff * x[n-1].
inline AudioClip pre_emphasize(const AudioClip& clip, double coeff) {
  if (!(coeff >= 0.0 && coeff < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "pre-emphasis coeff must be in [0, 1)");
  }
  AudioClip out = clip;
  for (std::size_t n = out.samples.size(); n-- > 1;) {
    out.samples[n] = static_cast<float>(clip.samples[n] - coeff * clip.samples[n - 1]);
  }
  return out;
}

/// Energy-based lead/tail trim. Off by default at ingestion; kept simple:
/// drops leading/trailing 10 ms blocks whose RMS falls below `threshold`.
inline AudioClip trim_silence(const AudioClip& clip, float threshold = 1e-3f) {
  const std::size_t block = clip.sample_rate > 0
                                ? static_cast<std::size_t>(clip.sample_rate / 100)
                                : std::size_t{160};
  if (block == 0 || clip.samples.size() < block) return clip;

  auto block_rms = [&](std::size_t start) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + block; ++i) acc += double(clip.samples[i]) * clip.samples[i];
    return std::sqrt(acc / static_cast<double>(block));
  };

  std::size_t begin = 0;
  while (begin + block <= clip.samples.size() && block_rms(begin) < threshold) begin += block;
  std::size_t end = clip.samples.size();
  while (end >= begin + block && block_rms(end - block) < threshold) end -= block;
  if (begin >= end) return AudioClip{{}, clip.sample_rate, clip.id};

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.id = clip.id;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

inline double rms(const AudioClip& clip) {
  if (clip.samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : clip.samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc / static_cast<double>(clip.samples.size()));
}

}  // namespace vp
