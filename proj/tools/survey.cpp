#include <iostream>

#include "survey/cli.hpp"

int main(int argc, char** argv) { return survey::cli::run(argc, argv, std::cout, std::cerr); }
