#include <iostream>

#include "efemb/cli.hpp"

int main(int argc, char** argv) { return efemb::run_cli(argc, argv, std::cout, std::cerr); }
