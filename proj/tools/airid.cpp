#include <iostream>

#include "airid/commands.hpp"

int main(int argc, char** argv) { return airid::run_cli(argc, argv, std::cout, std::cerr); }
