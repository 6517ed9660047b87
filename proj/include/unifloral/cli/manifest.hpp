#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace unifloral {

inline constexpr const char* kToolVersion = "0.1.0";

// Record written as manifest.json into every run directory. Only
// started_at and finished_at vary between reruns with identical flags.
struct RunManifest {
  std::string command;
  nlohmann::json args = nlohmann::json::object();    // option name -> effective value
  std::map<std::string, std::string> input_hashes;   // input path -> git blob SHA-1
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;                  // relative to the run directory
  nlohmann::json results = nlohmann::json::object(); // command-specific summary
};

nlohmann::json manifest_to_json(const RunManifest& m);
void write_manifest(const std::string& dir, const RunManifest& m);  // throws IoError

// SHA-1 of "blob <size>\0" followed by the bytes, as git hashes file contents.
std::string git_blob_sha1(const std::string& bytes);
std::string git_blob_sha1_of_file(const std::string& path);  // throws IoError

std::string sha1_hex(const std::string& bytes);
std::string utc_timestamp();  // ISO 8601, seconds

}  // namespace unifloral
