#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return pathlens::cli::dispatch(argc, argv, std::cout, std::cerr); }
