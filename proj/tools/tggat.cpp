#include <iostream>

#include "tggat/commands.hpp"

int main(int argc, char** argv) { return tggat::cli::run(argc, argv, std::cout, std::cerr); }
