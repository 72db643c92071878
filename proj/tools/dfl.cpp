#include "dfl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dfl::run_cli(argc, argv, std::cout, std::cerr); }
