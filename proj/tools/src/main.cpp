#include "tfrc/cli/commands.hpp"

#include <iostream>

int main(int argc, char **argv) { return tfrc::cli::run_cli(argc, argv, std::cout, std::cerr); }
