#pragma once

#include <string>

#include "stmg/pipeline.hpp"

namespace stmg {

inline constexpr const char* kCheckpointVersion = "stmg-ckpt-1";

std::string encode_checkpoint(const Model& model);
/// Throws DimensionError if a tensor is missing, unexpected or mis-shaped for
/// the stored configuration.
Model decode_checkpoint(const std::string& bytes);

void write_checkpoint(const Model& model, const std::string& path);
Model read_checkpoint(const std::string& path);

}  // namespace stmg
