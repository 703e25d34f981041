#include <iostream>

#include "monoplot/app/cli.hpp"

int main(int argc, char** argv) { return monoplot::app::run_cli(argc, argv, std::cout, std::cerr); }
