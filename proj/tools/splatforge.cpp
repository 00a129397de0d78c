#include <iostream>

#include "splatforge/cli/cli.hpp"

int main(int argc, char** argv) { return splatforge::run_cli(argc, argv, std::cout, std::cerr); }
