#include <iostream>

#include "milpexplain/cli.hpp"

int main(int argc, char** argv) {
  return milpexplain::cli::run_cli(argc, argv, std::cout, std::cerr);
}
