// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "hmnet/cli.hpp"

int main(int argc, char** argv) { return hmnet::run_cli(argc, argv, std::cout, std::cerr); }
