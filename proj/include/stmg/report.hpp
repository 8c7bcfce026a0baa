#pragma once

#include <string>

#include "stmg/analysis.hpp"
#include "stmg/trainer.hpp"

namespace stmg {

// Stable key=value lines with fixed field order and precision.

std::string format_epoch(const EpochLog& log);
std::string format_analysis(const DatasetAnalysis& a);

}  // namespace stmg
