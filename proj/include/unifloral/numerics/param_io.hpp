#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "unifloral/numerics/mlp.hpp"

namespace unifloral {

void to_json(nlohmann::json& j, const MlpArch& arch);
void from_json(const nlohmann::json& j, MlpArch& arch);

// Framed binary container shared by parameter and dataset files:
//   8-byte magic | uint64 LE header length | UTF-8 JSON header | payload
// where the payload is little-endian IEEE-754 float32 values.
namespace binio {

void write_frame(std::ostream& os, std::string_view magic, const nlohmann::json& header,
                 std::span<const float> payload);

struct Frame {
  nlohmann::json header;
  std::vector<float> payload;
};

// Reads the frame header; then reads exactly `payload_count(header)` floats.
// Throws FormatError (bad magic/header), TruncatedError.
Frame read_frame(std::istream& is, std::string_view magic,
                 const std::function<std::size_t(const nlohmann::json&)>& payload_count);

}  // namespace binio

inline constexpr int kParamFormatVersion = 1;

void write_params(std::ostream& os, const MlpArch& arch, std::span<const float> params);
void save_params(const std::string& path, const MlpArch& arch, std::span<const float> params);

struct LoadedParams {
  MlpArch arch;
  ParamVector params;
};
LoadedParams read_params(std::istream& is);
LoadedParams load_params(const std::string& path);

}  // namespace unifloral
