#include <iostream>

#include "zoosight/cli.hpp"

int main(int argc, char** argv) { return zoosight::run_cli(argc, argv, std::cout, std::cerr); }
