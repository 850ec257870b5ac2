#include <iostream>

#include "vibraforge/cli.hpp"

int main(int argc, char** argv) { return vibraforge::run_cli(argc, argv, std::cout, std::cerr); }
