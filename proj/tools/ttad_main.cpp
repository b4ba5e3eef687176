#include <iostream>

#include "ttad/cli.hpp"

int main(int argc, char** argv) { return ttad::run_cli(argc, argv, std::cout, std::cerr); }
