#include "iptkit/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

constexpr char kMagic[8] = {'I', 'P', 'T', 'K', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t offset) {
  T v;
  std::memcpy(&v, in.data() + offset, sizeof(T));
  return v;
}

}  // namespace

std::string encode_container(const ParamStore& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["params"] = nlohmann::json::array();
  for (const auto& p : params) {
    header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  header["meta"] = meta;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : params) {
    out.append(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(double));
  }
  return out;
}

Container decode_container(const std::string& bytes) {
  constexpr std::size_t kPrefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("checkpoint: bad magic, not an iptkit container");
  }
  const auto version = get<std::uint32_t>(bytes, sizeof(kMagic));
  if (version != kContainerVersion) {
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(bytes, sizeof(kMagic) + 4);
  if (header_len > bytes.size() - kPrefix) throw ParseError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kPrefix, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: corrupt header: ") + e.what());
  }

  Container c;
  std::size_t offset = kPrefix + header_len;
  try {
    for (const auto& entry : header.at("params")) {
      Shape shape = entry.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      if (n > (bytes.size() - offset) / sizeof(double)) {
        throw ParseError("checkpoint: payload truncated at " + entry.at("name").get<std::string>());
      }
      std::vector<double> data(n);
      std::memcpy(data.data(), bytes.data() + offset, n * sizeof(double));
      offset += n * sizeof(double);
      c.params.add(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
    c.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (offset != bytes.size()) throw ParseError("checkpoint: trailing bytes after payload");
  return c;
}

void save_container(const std::filesystem::path& path, const ParamStore& params,
                    const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = encode_container(params, meta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_container(buf.str());
}

}  // namespace iptkit
