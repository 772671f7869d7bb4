#include <iostream>
#include <string>
#include <vector>

#include "nwhead/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return nwhead::run_cli(args, std::cout, std::cerr);
}
