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
#include <sstream>
#include <string>
#include <vector>

#include "vp/error.hpp"

namespace vp {

inline constexpr const char* kManifestHeader = "path,speaker,transcript,split";

/// One dataset row. `path` is absolute once loaded from disk (relative
/// entries resolve against the manifest's directory).
struct ManifestEntry {
  std::filesystem::path path;
  std::string speaker;
  std::string transcript;
  std::string split;  // "train" or "test"

  std::string utterance_id() const { return path.stem().string(); }
};

namespace detail {

/// RFC 4180 flavored: quoted fields may contain commas, newlines, and
/// doubled quotes; rows end at \n or \r\n.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;

  std::size_t i = 0;
  if (text.size() >= 3 && text.compare(0, 3, "\xef\xbb\xbf") == 0) i = 3;  // BOM

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_started) {
          quoted = true;
          field_started = true;
        } else {
          field += c;  // stray quote mid-field, keep it
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field += c;
        field_started = true;
        break;
    }
  }
  if (quoted) throw Error(ErrorCode::ManifestInvalid, "unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

/// Parses manifest CSV text. Relative paths resolve against `base_dir`
/// when it is non-empty.
inline std::vector<ManifestEntry> parse_manifest(const std::string& text,
                                                 const std::filesystem::path& base_dir = {}) {
  const std::vector<std::vector<std::string>> rows = detail::parse_csv(text);
  if (rows.empty()) {
    throw Error(ErrorCode::ManifestInvalid, "missing header row");
  }
  if (rows.front() != std::vector<std::string>{"path", "speaker", "transcript", "split"}) {
    throw Error(ErrorCode::ManifestInvalid,
                std::string("header must be exactly `") + kManifestHeader + "`");
  }
  std::vector<ManifestEntry> entries;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::vector<std::string>& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    if (row.size() != 4) {
      throw Error(ErrorCode::ManifestInvalid,
                  "row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                      " fields, expected 4");
    }
    ManifestEntry e;
    e.path = std::filesystem::path(row[0]);
    e.speaker = row[1];
    e.transcript = row[2];
    e.split = row[3];
    if (row[0].empty() || e.speaker.empty()) {
      throw Error(ErrorCode::ManifestInvalid,
                  "row " + std::to_string(r + 1) + ": path and speaker are required");
    }
    if (e.split != "train" && e.split != "test") {
      throw Error(ErrorCode::ManifestInvalid, "row " + std::to_string(r + 1) +
                                                  ": split must be train or test, got `" +
                                                  e.split + "`");
    }
    if (e.path.is_relative() && !base_dir.empty()) e.path = base_dir / e.path;
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

inline std::string manifest_csv(const std::vector<ManifestEntry>& entries) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const ManifestEntry& e : entries) {
    out += detail::csv_escape(e.path.generic_string()) + ',' +
           detail::csv_escape(e.speaker) + ',' + detail::csv_escape(e.transcript) + ',' +
           detail::csv_escape(e.split) + '\n';
  }
  return out;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << manifest_csv(entries);
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

inline std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries,
                                               const std::string& split) {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

inline std::vector<std::string> manifest_speakers(const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> ids;
  for (const ManifestEntry& e : entries) ids.push_back(e.speaker);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace vp
