#include "unifloral/numerics/param_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace unifloral {

void to_json(nlohmann::json& j, const MlpArch& arch) {
  j = nlohmann::json{{"input_dim", arch.input_dim},
                     {"hidden_widths", arch.hidden_widths},
                     {"output_dim", arch.output_dim},
                     {"activation", arch.activation == Activation::relu ? "relu" : "tanh"},
                     {"use_layer_norm", arch.use_layer_norm},
                     {"final_activation",
                      arch.final_activation == FinalActivation::none ? "none" : "tanh"}};
}

void from_json(const nlohmann::json& j, MlpArch& arch) {
  arch.input_dim = j.at("input_dim").get<int>();
  arch.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  arch.output_dim = j.at("output_dim").get<int>();
  const auto act = j.at("activation").get<std::string>();
  if (act != "relu" && act != "tanh") throw FormatError("unknown activation '" + act + "'");
  arch.activation = act == "relu" ? Activation::relu : Activation::tanh;
  arch.use_layer_norm = j.at("use_layer_norm").get<bool>();
  const auto fin = j.at("final_activation").get<std::string>();
  if (fin != "none" && fin != "tanh") throw FormatError("unknown final activation '" + fin + "'");
  arch.final_activation = fin == "none" ? FinalActivation::none : FinalActivation::tanh;
}

namespace binio {

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (is.gcount() != 8) throw TruncatedError("truncated file: missing header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_frame(std::ostream& os, std::string_view magic, const nlohmann::json& header,
                 std::span<const float> payload) {
  if (magic.size() != 8) throw ContractError("binio: magic must be 8 bytes");
  const std::string h = header.dump();
  os.write(magic.data(), 8);
  put_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  std::vector<unsigned char> buf(payload.size() * 4);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(payload[i]);
    for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<unsigned char>(u >> (8 * k));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed");
}

Frame read_frame(std::istream& is, std::string_view magic,
                 const std::function<std::size_t(const nlohmann::json&)>& payload_count) {
  char m[8];
  is.read(m, 8);
  if (is.gcount() != 8) throw TruncatedError("truncated file: missing magic");
  if (std::memcmp(m, magic.data(), 8) != 0) throw FormatError("bad magic bytes");
  const std::uint64_t hlen = get_u64(is);
  if (hlen > (1ULL << 30)) throw FormatError("implausible header length");
  std::string h(hlen, '\0');
  is.read(h.data(), static_cast<std::streamsize>(hlen));
  if (static_cast<std::uint64_t>(is.gcount()) != hlen) throw TruncatedError("truncated header");
  Frame f;
  try {
    f.header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
  std::size_t count = 0;
  try {
    count = payload_count(f.header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
  std::vector<unsigned char> buf(count * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw TruncatedError("truncated payload");
  f.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(buf[4 * i + k]) << (8 * k);
    f.payload[i] = std::bit_cast<float>(u);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload");
  return f;
}

}  // namespace binio

namespace {
constexpr std::string_view kParamMagic = "UFPARAM1";
}

void write_params(std::ostream& os, const MlpArch& arch, std::span<const float> params) {
  if (params.size() != arch.param_count()) throw ContractError("write_params: length mismatch");
  nlohmann::json header{{"arch", arch},
                        {"param_count", params.size()},
                        {"format_version", kParamFormatVersion}};
  binio::write_frame(os, kParamMagic, header, params);
}

void save_params(const std::string& path, const MlpArch& arch, std::span<const float> params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_params(os, arch, params);
}

LoadedParams read_params(std::istream& is) {
  auto frame = binio::read_frame(is, kParamMagic, [](const nlohmann::json& h) {
    if (h.at("format_version").get<int>() != kParamFormatVersion)
      throw VersionError("unsupported parameter format version");
    return h.at("param_count").get<std::size_t>();
  });
  LoadedParams out;
  try {
    out.arch = frame.header.at("arch").get<MlpArch>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed arch: ") + e.what());
  }
  if (out.arch.param_count() != frame.payload.size())
    throw FormatError("param_count does not match architecture");
  for (float v : frame.payload)
    if (!std::isfinite(v)) throw NonFiniteDataError("non-finite parameter value");
  out.params = std::move(frame.payload);
  return out;
}

LoadedParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_params(is);
}

}  // namespace unifloral
