#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "iptkit/autograd.hpp"

namespace iptkit {

/// On-disk parameter container:
///
///   bytes 0..7   magic "IPTKCKPT"
///   bytes 8..11  format version, little-endian uint32
///   bytes 12..19 header length in bytes, little-endian uint64
///   header       compact JSON: {"params": [{"name", "shape"}...], "meta": {...}}
///   payload      every parameter's values as little-endian IEEE-754 doubles,
///                concatenated in header order
///
/// Serialization is canonical, so save -> load -> save is byte-identical.
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  ParamStore params;
  nlohmann::json meta = nlohmann::json::object();
};

std::string encode_container(const ParamStore& params, const nlohmann::json& meta);
Container decode_container(const std::string& bytes);

void save_container(const std::filesystem::path& path, const ParamStore& params,
                    const nlohmann::json& meta);
Container load_container(const std::filesystem::path& path);

}  // namespace iptkit
