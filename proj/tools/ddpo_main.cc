#include <iostream>

#include "ddpo/cli.h"

int main(int argc, char** argv) { return ddpo::run_cli(argc, argv, std::cout, std::cerr); }
