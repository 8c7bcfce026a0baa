#include <iostream>

#include "stmg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stmg::run_command(args, std::cout, std::cerr);
}
