#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace stmg {

/// Entry point of the `stmg-lab` tool. Returns the process exit code:
/// 0 success, 1 bad input or failed check, 2 usage error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count: hardware concurrency capped by STMG_LAB_THREADS when set.
std::size_t worker_count();

/// Runs fn(0..n-1) on up to `workers` threads. Each index runs exactly once.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace stmg
