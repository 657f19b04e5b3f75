#include <iostream>

#include "targan/cli.hpp"

int main(int argc, char** argv) { return targan::run_cli(argc, argv, std::cout, std::cerr); }
