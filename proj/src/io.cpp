// SPDX-License-Identifier: Apache-2.0
#include "hguide/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hguide/errors.hpp"
#include "hguide/rng.hpp"
#include "hguide/version.hpp"

namespace hguide {

namespace {

// payloads are defined little-endian; byte-swap on big-endian hosts
bool host_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

void swap_doubles(std::vector<double>& v) {
  for (double& d : v) {
    unsigned char* p = reinterpret_cast<unsigned char*>(&d);
    for (int i = 0; i < 4; ++i) std::swap(p[i], p[7 - i]);
  }
}

}  // namespace

void write_artifact(const std::string& path, nlohmann::json header, const double* data, std::size_t count) {
  header["format_version"] = kArtifactFormatVersion;
  header["payload_count"] = count;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_format("cannot open for writing: " + path);
  out << header.dump() << '\n';
  if (count > 0) {
    if (host_little_endian()) {
      out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    } else {
      std::vector<double> tmp(data, data + count);
      swap_doubles(tmp);
      out.write(reinterpret_cast<const char*>(tmp.data()), static_cast<std::streamsize>(count * sizeof(double)));
    }
  }
  if (!out) throw_format("short write: " + path);
}

Artifact read_artifact(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_dependency("missing artifact: " + path);
  std::string line;
  if (!std::getline(in, line)) throw_format("empty artifact: " + path);
  Artifact art;
  try {
    art.header = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw_format("bad artifact header in " + path + ": " + e.what());
  }
  const int ver = art.header.value("format_version", -1);
  if (ver != kArtifactFormatVersion) {
    throw_format("artifact format version mismatch in " + path + ": file has " + std::to_string(ver) +
                 ", reader expects " + std::to_string(kArtifactFormatVersion));
  }
  const std::string kind = art.header.value("kind", "");
  if (!expected_kind.empty() && kind != expected_kind) {
    throw_format("artifact kind mismatch in " + path + ": file has '" + kind + "', expected '" + expected_kind + "'");
  }
  const std::size_t count = art.header.value("payload_count", std::size_t{0});
  art.payload.resize(count);
  if (count > 0) {
    in.read(reinterpret_cast<char*>(art.payload.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
      throw_format("truncated artifact payload in " + path);
    }
    if (!host_little_endian()) swap_doubles(art.payload);
  }
  return art;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_format("cannot open for writing: " + path);
  out << text;
  if (!out) throw_format("short write: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_dependency("missing file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t json_hash(const nlohmann::json& j) { return fnv1a64(j.dump()); }

}  // namespace hguide
