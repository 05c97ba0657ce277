#include "nlcausal/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nlcausal::run_cli(argc, argv, std::cout, std::cerr); }
