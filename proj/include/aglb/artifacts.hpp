#pragma once

// Run manifests, content digests and artifact files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "json.hpp"

namespace aglb::run {

inline constexpr std::string_view kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
// Throws IoError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;       // role -> sha256 of the file
  std::map<std::string, std::string> checkpoints;  // role -> sha256 of the file
  std::string tool_version{kToolVersion};

  std::string config_hash() const;
  // Digest of every field above; independent of file locations.
  std::string hash() const;
  nlohmann::json to_json() const;
};

// <root>/<command>-<first 12 hex digits of the manifest hash>
std::filesystem::path run_directory(const std::filesystem::path& root, const RunManifest& m);

// "# manifest <hash>\n", the first line of CSV, JSONL and text artifacts.
std::string banner(const std::string& hash);

void write_file(const std::filesystem::path& path, std::string_view content);
// Throws IoError.
std::string read_file(const std::filesystem::path& path);
// Drops lines starting with '#'.
std::string strip_banner(std::string_view content);

}  // namespace aglb::run
