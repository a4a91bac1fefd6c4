#include <iostream>

#include "carguard/cli.hpp"

int main(int argc, char** argv) { return carguard::run_cli(argc, argv, std::cout, std::cerr); }
