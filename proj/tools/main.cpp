#include <iostream>

#include "lsm/cli.hpp"

int main(int argc, char** argv) { return lsm::run_cli(argc, argv, std::cout, std::cerr); }
