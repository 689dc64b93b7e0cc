#include <iostream>

#include "balpol/cli.hpp"

int main(int argc, char** argv) { return balpol::run_cli(argc, argv, std::cout, std::cerr); }
