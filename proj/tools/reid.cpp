#include <iostream>
#include <string>
#include <vector>

#include "reid/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return reid::run_cli(args, std::cout, std::cerr);
}
