#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randcon/connectivity.hpp"
#include "randcon/errors.hpp"

namespace randcon {

// Binary container layout (little-endian):
//   4 bytes magic | u32 format version | u32 header length | JSON header |
//   raw row-major float64 payload
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string encode_container(std::string_view magic, const nlohmann::json& header,
                                    std::span<const double> payload) {
  if (magic.size() != 4) throw ParameterError("container magic must be 4 bytes");
  std::string out(magic);
  const std::string text = header.dump();
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + payload.size() * 8);
  for (double v : payload) detail::put_f64(out, v);
  return out;
}

// `expected_doubles` is read from the header by the caller-supplied callback,
// so a truncated payload is detected instead of silently accepted.
template <typename PayloadSize>
Container decode_container(std::string_view bytes, std::string_view magic, PayloadSize&& payload_size) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12) throw FormatError("container is truncated (no complete preamble)");
  if (bytes.substr(0, 4) != magic)
    throw FormatError("bad magic bytes: expected '" + std::string(magic) + "'");
  const auto version = detail::get_u32(p + 4);
  if (version != kContainerVersion)
    throw FormatError("incompatible container version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kContainerVersion) + ")");
  const auto header_len = detail::get_u32(p + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) throw FormatError("container is truncated inside the header");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt container header: ") + e.what());
  }
  const std::size_t expected = payload_size(c.header);
  const std::size_t offset = 12 + header_len;
  if (bytes.size() - offset != expected * 8)
    throw FormatError("corrupt container: payload has " + std::to_string(bytes.size() - offset) +
                      " bytes, header declares " + std::to_string(expected * 8));
  c.payload.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) c.payload[i] = detail::get_f64(p + offset + 8 * i);
  return c;
}

inline void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline nlohmann::json to_json(const FcParams& p) {
  return {{"width", p.width},         {"stride", p.stride},
          {"kernel_count", p.kernel_count}, {"padding", to_string(p.padding)},
          {"avg_window", p.avg_window}, {"seed", p.seed}};
}

inline FcParams fc_params_from_json(const nlohmann::json& j) {
  FcParams p;
  p.width = j.at("width").get<std::size_t>();
  p.stride = j.at("stride").get<std::size_t>();
  p.kernel_count = j.at("kernel_count").get<std::size_t>();
  p.padding = padding_from_string(j.at("padding").get<std::string>());
  p.avg_window = j.at("avg_window").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline std::string encode_fc_series(const FcSeries& fcs) {
  if (fcs.frames() == 0) throw DimensionError("refusing to save an empty FC series (T' = 0)");
  nlohmann::json header{{"format", "rcfc"},
                        {"n", fcs.n()},
                        {"frames", fcs.frames()},
                        {"method", to_string(fcs.method())},
                        {"params", to_json(fcs.params())},
                        {"degenerate_pairs", fcs.degenerate_pairs()}};
  return encode_container("RCFC", header, fcs.values());
}

inline FcSeries decode_fc_series(std::string_view bytes) {
  try {
    auto c = decode_container(bytes, "RCFC", [](const nlohmann::json& h) {
      const auto n = h.at("n").get<std::size_t>();
      return n * n * h.at("frames").get<std::size_t>();
    });
    const auto& h = c.header;
    return FcSeries(h.at("n").get<std::size_t>(), h.at("frames").get<std::size_t>(),
                    fc_method_from_string(h.at("method").get<std::string>()),
                    fc_params_from_json(h.at("params")), std::move(c.payload),
                    h.at("degenerate_pairs").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt FC container header: ") + e.what());
  }
}

inline void save_fc_series(const std::filesystem::path& path, const FcSeries& fcs) {
  write_bytes(path, encode_fc_series(fcs));
}

inline FcSeries load_fc_series(const std::filesystem::path& path) {
  try {
    return decode_fc_series(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace randcon
