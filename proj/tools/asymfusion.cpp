#include <iostream>

#include "asymfusion/cli.hpp"

int main(int argc, char** argv) { return asymfusion::run_cli(argc, argv, std::cout, std::cerr); }
