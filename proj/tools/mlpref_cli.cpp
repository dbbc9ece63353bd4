#include <iostream>

#include "mlpref/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mlpref::run_cli(args, std::cout, std::cerr);
}
