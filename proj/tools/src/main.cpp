#include <iostream>

#include "recursim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return recursim::cli::dispatch(args, std::cout, std::cerr);
}
