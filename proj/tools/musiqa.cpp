#include <iostream>

#include "musiqa/cli.hpp"

int main(int argc, char** argv) { return musiqa::cli::run_cli(argc, argv, std::cout, std::cerr); }
