#include <iostream>

#include "bpo/cli.hpp"

int main(int argc, char** argv) { return bpo::cli_main(argc, argv, std::cout, std::cerr); }
