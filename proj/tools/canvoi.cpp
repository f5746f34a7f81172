#include <iostream>

#include "canvoi/cli/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return canvoi::cli::run_cli(args, std::cout, std::cerr);
}
