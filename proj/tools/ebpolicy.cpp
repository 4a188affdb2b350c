#include <iostream>
#include <string>
#include <vector>

#include "ebpolicy/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ebpolicy::run_cli(args, std::cout, std::cerr);
}
