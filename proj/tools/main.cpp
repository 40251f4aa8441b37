#include <iostream>
#include <string>
#include <vector>

#include "dualstream_cli/cli.hpp"

int main(int argc, char** argv) {
  return dualstream::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
