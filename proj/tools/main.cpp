#include "dgsm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dgsm::run_cli(argc, argv, std::cout, std::cerr); }
