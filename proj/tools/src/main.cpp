#include <iostream>

#include "cta/cli/commands.hpp"

int main(int argc, char** argv) { return cta::cli::run_cli(argc, argv, std::cout, std::cerr); }
