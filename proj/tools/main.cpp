#include <iostream>

#include "hcanet/cli.hpp"

int main(int argc, char** argv) { return hcanet::cli::run(argc, argv, std::cout, std::cerr); }
