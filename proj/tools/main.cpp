#include <iostream>

#include "atomtrap/cli.hpp"

int main(int argc, char** argv) { return atomtrap::cli::run(argc, argv, std::cout, std::cerr); }
