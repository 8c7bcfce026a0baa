#include "stmg/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stmg/error.hpp"

namespace stmg {

namespace {

void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double load_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string encode_container(const Container& c) {
  nlohmann::json header;
  header["version"] = c.version;
  header["meta"] = c.meta;
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  header["tensors"] = std::move(entries);
  header["payload_bytes"] = offset;

  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : c.tensors) {
    for (double v : t.storage()) append_le(out, v);
  }
  return out;
}

Container decode_container(std::string_view bytes, std::string_view expected_version) {
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw ParseError("missing header terminator", bytes.size());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, eol));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }

  Container c;
  try {
    c.version = header.at("version").get<std::string>();
    if (!expected_version.empty() && c.version != expected_version) {
      throw UnsupportedVersionError("unsupported container version '" + c.version + "', expected '" +
                                    std::string(expected_version) + "'");
    }
    c.meta = header.at("meta");
    const std::size_t payload_bytes = header.at("payload_bytes").get<std::size_t>();
    const std::size_t base = eol + 1;
    if (bytes.size() - base < payload_bytes) {
      throw ParseError("payload truncated: expected " + std::to_string(payload_bytes) + " bytes, found " +
                           std::to_string(bytes.size() - base),
                       bytes.size());
    }
    if (bytes.size() - base > payload_bytes) throw ParseError("trailing bytes after payload", base + payload_bytes);
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(shape);
      if (offset % sizeof(double) != 0 || offset > payload_bytes || n > (payload_bytes - offset) / sizeof(double)) {
        throw ParseError("tensor '" + name + "' exceeds the payload", base + offset);
      }
      std::vector<double> data(n);
      const char* p = bytes.data() + base + offset;
      for (std::size_t i = 0; i < n; ++i) data[i] = load_le(p + i * sizeof(double));
      c.tensors.emplace(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed header field: ") + e.what(), 0);
  }
  return c;
}

void write_file_atomic(const std::string& path, std::string_view bytes) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stmg
