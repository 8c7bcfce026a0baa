#pragma once

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stmg/tensor.hpp"

namespace stmg {

/// Self-describing file: one line of JSON header followed by a flat payload
/// of little-endian float64 values.
///
///   {"meta":{...},"payload_bytes":N,"tensors":[{"name":..,"offset":..,"shape":[..]}],"version":".."}\n
///   <N bytes of payload>
///
/// Tensors are laid out in name order; offsets are in bytes from the start
/// of the payload. Encoding is deterministic (sorted keys, fixed order).
struct Container {
  std::string version;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

std::string encode_container(const Container& c);

/// Throws ParseError (with byte offset) on malformed input and
/// UnsupportedVersionError if `expected_version` is non-empty and differs.
Container decode_container(std::string_view bytes, std::string_view expected_version);

void write_file_atomic(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

}  // namespace stmg
