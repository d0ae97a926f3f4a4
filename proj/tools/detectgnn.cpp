#include <iostream>

#include "detectgnn/cli.hpp"

int main(int argc, char** argv) { return detectgnn::cli::run(argc, argv, std::cout, std::cerr); }
