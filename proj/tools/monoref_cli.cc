#include <iostream>
#include <string>
#include <vector>

#include "monoref/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return monoref::RunCommand(args, std::cout, std::cerr);
}
