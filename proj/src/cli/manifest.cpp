#include "unifloral/cli/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 computation failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1(const std::string& bytes) {
  std::string blob = "blob " + std::to_string(bytes.size());
  blob.push_back('\0');
  return sha1_hex(blob + bytes);
}

std::string git_blob_sha1_of_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return git_blob_sha1(ss.str());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  return {{"command", m.command},         {"args", m.args},
          {"input_hashes", m.input_hashes}, {"seed", m.seed},
          {"tool_version", m.tool_version}, {"started_at", m.started_at},
          {"finished_at", m.finished_at},   {"outputs", m.outputs},
          {"results", m.results}};
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  const std::string path = dir + "/manifest.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << manifest_to_json(m).dump(2) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace unifloral
