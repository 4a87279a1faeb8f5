// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace hguide {

// On-disk artifact layout: one line of JSON metadata terminated by '\n',
// followed by a raw little-endian float64 payload. The header carries
// "format_version", "kind" and "payload_count"; readers reject version or
// kind mismatches and truncated payloads.

struct Artifact {
  nlohmann::json header;
  std::vector<double> payload;
};

void write_artifact(const std::string& path, nlohmann::json header, const double* data, std::size_t count);
Artifact read_artifact(const std::string& path, const std::string& expected_kind);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// stable float formatting shared by every CSV emitter (shortest round trip)
std::string format_double(double v);

std::uint64_t json_hash(const nlohmann::json& j);  // FNV-1a over the canonical dump

}  // namespace hguide
