#include <iostream>

#include "forage/commands.hpp"

int main(int argc, char** argv) {
  return forage::cli::run_cli(argc, argv, std::cin, std::cout, std::cerr);
}
