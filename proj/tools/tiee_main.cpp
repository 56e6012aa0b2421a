#include <iostream>

#include "tiee/cli.hpp"

int main(int argc, char** argv) { return tiee::cli::run(argc, argv, std::cout, std::cerr); }
