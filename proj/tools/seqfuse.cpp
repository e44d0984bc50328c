#include "seqfuse/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return seqfuse::run_cli(argc, argv, std::cout, std::cerr); }
